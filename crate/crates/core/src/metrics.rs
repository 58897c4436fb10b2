//! Fidelity metrics: MSE and PSNR.

use nalgebra::DVector;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{check_dim, DpirError, Result};

/// MSE/PSNR of one estimate against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    /// `+inf` when the inputs coincide; serialized as the string `"inf"`.
    #[serde(serialize_with = "psnr_ser", deserialize_with = "psnr_de")]
    pub psnr_db: f64,
    pub n_samples: usize,
}

impl MetricReport {
    pub fn is_exact(&self) -> bool {
        self.psnr_db.is_infinite()
    }
}

fn psnr_ser<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn psnr_de<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Psnr {
        Num(f64),
        Text(String),
    }
    match Psnr::deserialize(d)? {
        Psnr::Num(v) => Ok(v),
        Psnr::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Psnr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr `{t}`"))),
    }
}

/// PSNR in dB for a given MSE and signal peak.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn mse(reference: &DVector<f64>, estimate: &DVector<f64>) -> Result<f64> {
    check_dim(reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(DpirError::InvalidParameter {
            name: "reference",
            reason: "empty vector".into(),
        });
    }
    Ok((reference - estimate).norm_squared() / reference.len() as f64)
}

pub fn evaluate(reference: &DVector<f64>, estimate: &DVector<f64>, peak: f64) -> Result<MetricReport> {
    if !(peak > 0.0) {
        return Err(DpirError::InvalidParameter {
            name: "peak",
            reason: format!("must be positive, got {peak}"),
        });
    }
    let mse = mse(reference, estimate)?;
    Ok(MetricReport {
        mse,
        psnr_db: psnr(mse, peak),
        n_samples: reference.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_is_infinite() {
        let x = DVector::from_vec(vec![0.1, 0.2]);
        let r = evaluate(&x, &x, 1.0).unwrap();
        assert_eq!(r.mse, 0.0);
        assert!(r.is_exact());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""), "{json}");
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
    }

    #[test]
    fn known_values() {
        assert!((psnr(0.01, 1.0) - 20.0).abs() < 1e-12);
        let a = DVector::from_vec(vec![0.0, 0.25, 0.5, 1.0]);
        let b = a.add_scalar(0.5);
        let r = evaluate(&a, &b, 1.0).unwrap();
        assert_eq!(r.mse, 0.25);
        assert!((r.psnr_db - 6.020599913279624).abs() < 1e-12);
        assert_eq!(r.n_samples, 4);
    }

    #[test]
    fn errors() {
        let a = DVector::from_vec(vec![1.0]);
        assert!(evaluate(&a, &DVector::from_vec(vec![1.0, 2.0]), 1.0).is_err());
        assert!(evaluate(&a, &a, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(xs in proptest::collection::vec(-5.0..5.0f64, 1..16), shift in -1.0..1.0f64) {
            let a = DVector::from_vec(xs);
            let b = a.map(|v| v * 0.9 + shift);
            prop_assert_eq!(evaluate(&a, &b, 1.0).unwrap(), evaluate(&b, &a, 1.0).unwrap());
        }

        #[test]
        fn psnr_decreasing(m1 in 1e-6..1e3f64, factor in 1.001..10.0f64) {
            prop_assert!(psnr(m1 * factor, 1.0) < psnr(m1, 1.0));
        }
    }
}
