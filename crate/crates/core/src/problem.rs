//! JSON problem-file schema: the single input format of the CLI.
//!
//! Matrices are row-major with explicit `rows`/`cols`, which keeps files
//! diffable and hand-writable. Serialization of every numeric field
//! round-trips exactly (shortest-representation float encoding).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::reduction::LQWeights;
use crate::wellposed::SingularSystem;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_dmatrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix data length {} does not match {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemData {
    pub e: MatrixData,
    pub a: MatrixData,
    pub b: MatrixData,
    pub c: MatrixData,
    pub d: MatrixData,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightsData {
    pub q: MatrixData,
    pub r: MatrixData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixData>,
    /// Finite horizon; absent for the infinite-horizon problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateData {
    pub k: MatrixData,
    pub m1: MatrixData,
    pub n1: MatrixData,
    pub block_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct OptionsData {
    pub tol_rank: Option<f64>,
    pub exact: Option<bool>,
    /// RK4 steps for the finite-horizon integration.
    pub steps: Option<usize>,
    pub t_step: Option<f64>,
    pub max_t: Option<f64>,
    pub tol_conv: Option<f64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
    /// Truncation horizon for infinite-horizon simulation.
    pub sim_horizon: Option<f64>,
}

impl Default for OptionsData {
    fn default() -> Self {
        OptionsData {
            tol_rank: None,
            exact: None,
            steps: None,
            t_step: None,
            max_t: None,
            tol_conv: None,
            paths: None,
            dt: None,
            seed: None,
            sim_horizon: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemFile {
    pub system: SystemData,
    pub weights: WeightsData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionsData>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn system(&self) -> Result<SingularSystem> {
        SingularSystem::new(
            self.system.e.to_dmatrix()?,
            self.system.a.to_dmatrix()?,
            self.system.b.to_dmatrix()?,
            self.system.c.to_dmatrix()?,
            self.system.d.to_dmatrix()?,
            DVector::from_vec(self.system.x0.clone()),
        )
    }

    pub fn weights(&self) -> Result<LQWeights> {
        Ok(LQWeights {
            q: self.weights.q.to_dmatrix()?,
            r: self.weights.r.to_dmatrix()?,
            h: self.weights.h.as_ref().map(|m| m.to_dmatrix()).transpose()?,
            horizon: self.weights.t,
        })
    }

    pub fn config(&self) -> Config {
        let mut cfg = Config::default();
        if let Some(opts) = &self.options {
            if let Some(t) = opts.tol_rank {
                cfg.tol_rank = t;
            }
            if let Some(e) = opts.exact {
                cfg.exact = e;
            }
            if let Some(s) = opts.seed {
                cfg.search_seed = s;
            }
        }
        cfg
    }

    pub fn certificate(
        &self,
    ) -> Result<Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<usize>)>> {
        match &self.certificate {
            None => Ok(None),
            Some(c) => Ok(Some((
                c.k.to_dmatrix()?,
                c.m1.to_dmatrix()?,
                c.n1.to_dmatrix()?,
                c.block_sizes.clone(),
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn roundtrip_is_lossless() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        // awkward floats: results of divisions, tiny and huge magnitudes
        let vals: Vec<f64> = (0..9)
            .map(|i| match i % 3 {
                0 => rng.gen::<f64>() / 3.0,
                1 => rng.gen::<f64>() * 1e-17,
                _ => rng.gen::<f64>() * 1e14,
            })
            .collect();
        let m = MatrixData {
            rows: 3,
            cols: 3,
            data: vals,
        };
        let p = ProblemFile {
            system: SystemData {
                e: m.clone(),
                a: m.clone(),
                b: MatrixData {
                    rows: 3,
                    cols: 1,
                    data: vec![1.0 / 3.0, 2.0 / 7.0, -1e-300],
                },
                c: m.clone(),
                d: MatrixData {
                    rows: 3,
                    cols: 1,
                    data: vec![0.0, -0.0, 5e300],
                },
                x0: vec![0.1 + 0.2, 1.0, 2.0],
            },
            weights: WeightsData {
                q: m.clone(),
                r: MatrixData {
                    rows: 1,
                    cols: 1,
                    data: vec![1.0],
                },
                h: None,
                t: Some(1.0),
            },
            certificate: None,
            options: None,
        };
        let text = p.to_json().unwrap();
        let back = ProblemFile::from_json(&text).unwrap();
        assert_eq!(p, back, "bit-exact numeric round-trip");
    }

    #[test]
    fn matrix_data_dmatrix_roundtrip() {
        let m = nalgebra::dmatrix![1.0, 2.0, 3.0; 4.0, 5.0, 6.0];
        let md = MatrixData::from_dmatrix(&m);
        assert_eq!(md.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(md.to_dmatrix().unwrap(), m);
    }

    #[test]
    fn rejects_bad_lengths() {
        let md = MatrixData {
            rows: 2,
            cols: 2,
            data: vec![1.0, 2.0, 3.0],
        };
        assert!(md.to_dmatrix().is_err());
    }
}
