//! Certified abstraction data: per-mode matrices plus the local certificate.

use serde::{Deserialize, Serialize};

use crate::certify::LocalCertificate;
use crate::error::{Error, Result};
use crate::linalg::{rows, rows_opt, Mat, Vector};

/// Everything attached to one mode of one subsystem kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeBundle {
    #[serde(with = "rows")]
    pub k: Mat,
    #[serde(with = "rows")]
    pub m: Mat,
    #[serde(with = "rows")]
    pub p: Mat,
    #[serde(with = "rows")]
    pub q: Mat,
    #[serde(with = "rows")]
    pub r: Mat,
    #[serde(with = "rows")]
    pub t: Mat,
    #[serde(with = "rows")]
    pub a_hat: Mat,
    #[serde(with = "rows")]
    pub b_hat: Mat,
    #[serde(with = "rows")]
    pub c_hat: Mat,
    #[serde(with = "rows")]
    pub d_hat: Mat,
    #[serde(default, with = "rows_opt", skip_serializing_if = "Option::is_none")]
    pub k_hat: Option<Mat>,
}

impl ModeBundle {
    /// Interface map `u = K (x - P xh) + Q xh + R uh + T wh`.
    pub fn interface(&self, x: &Vector, xh: &Vector, uh: &Vector, wh: &Vector) -> Vector {
        let mut u = &self.k * (x - &self.p * xh) + &self.q * xh;
        if self.r.ncols() > 0 {
            u += &self.r * uh;
        }
        if self.t.ncols() > 0 {
            u += &self.t * wh;
        }
        u
    }

    pub fn abstract_dim(&self) -> usize {
        self.a_hat.nrows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KindBundle {
    pub certificate: LocalCertificate,
    #[serde(rename = "mode")]
    pub modes: Vec<ModeBundle>,
}

/// Certified abstraction for every subsystem kind of a network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbstractionBundle {
    #[serde(rename = "kind")]
    pub kinds: Vec<KindBundle>,
}

impl AbstractionBundle {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
