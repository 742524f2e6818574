//! Common prediction interface over the fitted model types.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::Result;
use crate::gbm::GbmModel;
use crate::glm::{Family, GlmModel};
use crate::neural::Network;

/// A fitted model mapping raw feature rows (categorical values as level
/// indices) to a rate per unit exposure or an expected claim amount.
pub trait Predictor {
    fn predict_row(&self, row: &[f64]) -> Result<f64>;

    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; data.n_features()];
        (0..data.n_rows())
            .map(|i| {
                data.row_into(i, &mut buf);
                self.predict_row(&buf)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Glm(GlmModel),
    Gbm(GbmModel),
    Network(Box<Network>),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Glm(m) => m.family,
            Model::Gbm(m) => m.family,
            Model::Network(m) => m.family,
        }
    }

    pub fn fold(&self) -> Option<usize> {
        match self {
            Model::Glm(m) => m.fold,
            Model::Gbm(m) => m.fold,
            Model::Network(m) => m.fold,
        }
    }

    pub fn set_fold(&mut self, fold: Option<usize>) {
        match self {
            Model::Glm(m) => m.fold = fold,
            Model::Gbm(m) => m.fold = fold,
            Model::Network(m) => m.fold = fold,
        }
    }

    pub fn kind(&self) -> String {
        match self {
            Model::Glm(_) => "glm".into(),
            Model::Gbm(_) => "gbm".into(),
            Model::Network(n) => n.kind(),
        }
    }
}

impl Predictor for Model {
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        match self {
            Model::Glm(m) => m.predict_row(row),
            Model::Gbm(m) => Ok(m.predict_row(row)),
            Model::Network(m) => m.predict_row(row),
        }
    }

    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        match self {
            Model::Glm(m) => m.predict(data),
            Model::Gbm(m) => Ok(m.predict(data)),
            Model::Network(m) => Predictor::predict(m.as_ref(), data),
        }
    }
}

impl Predictor for GlmModel {
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        GlmModel::predict_row(self, row)
    }
}

impl Predictor for GbmModel {
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        Ok(GbmModel::predict_row(self, row))
    }
}

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        Ok((self.0)(row))
    }
}

/// Wraps a closure as a predictor (handy for known true models in tests).
pub struct FnPredictor<F>(pub F);
