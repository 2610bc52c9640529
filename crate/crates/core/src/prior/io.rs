use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PriorSpec, UnivariateMeasure};
use crate::error::{Error, Result};
use crate::format::{check_version, digest, FORMAT_VERSION};

pub const PRIOR_FORMAT_VERSION: &str = FORMAT_VERSION;

/// One coordinate of a product prior, or one component of a coordinate
/// mixture. `truncation` bounds use `null` for an infinite end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub dist: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<[Option<f64>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<MeasureEntry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedPrior {
    pub weight: f64,
    pub prior: PriorRepr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PriorRepr {
    Product {
        components: Vec<MeasureEntry>,
    },
    /// `cov` is row-major.
    Mvn {
        mean: Vec<f64>,
        cov: Vec<f64>,
    },
    Mixture {
        components: Vec<WeightedPrior>,
    },
}

/// On-disk form of a [`PriorSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorFile {
    pub version: String,
    #[serde(flatten)]
    pub prior: PriorRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<serde_json::Value>,
}

fn params<const N: usize>(e: &MeasureEntry) -> Result<[f64; N]> {
    e.params.as_slice().try_into().map_err(|_| {
        Error::Format(format!(
            "`{}` takes {N} parameters, got {}",
            e.dist,
            e.params.len()
        ))
    })
}

fn finite_or(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl MeasureEntry {
    fn plain(dist: &str, params: Vec<f64>) -> Self {
        MeasureEntry {
            weight: None,
            dist: dist.into(),
            params,
            truncation: None,
            components: None,
        }
    }

    fn to_measure(&self) -> Result<UnivariateMeasure> {
        if self.truncation.is_some() && self.dist != "normal" {
            return Err(Error::Format(format!(
                "truncation is only supported for `normal`, not `{}`",
                self.dist
            )));
        }
        if self.components.is_some() != (self.dist == "mixture") {
            return Err(Error::Format(
                "`components` belongs to `mixture` entries only".into(),
            ));
        }
        match self.dist.as_str() {
            "uniform" => {
                let [lo, hi] = params(self)?;
                UnivariateMeasure::uniform(lo, hi)
            }
            "beta" => {
                let [a, b] = params(self)?;
                UnivariateMeasure::beta(a, b)
            }
            "gamma" => {
                let [shape, rate] = params(self)?;
                UnivariateMeasure::gamma(shape, rate)
            }
            "normal" => {
                let [mu, sigma] = params(self)?;
                let [lo, hi] = self.truncation.unwrap_or([None, None]);
                UnivariateMeasure::trunc_normal(
                    mu,
                    sigma,
                    lo.unwrap_or(f64::NEG_INFINITY),
                    hi.unwrap_or(f64::INFINITY),
                )
            }
            "mixture" => {
                let comps = self.components.as_deref().unwrap_or_default();
                let parts = comps
                    .iter()
                    .map(|c| {
                        let w = c.weight.ok_or_else(|| {
                            Error::Format("mixture component without `weight`".into())
                        })?;
                        Ok((w, c.to_measure()?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                UnivariateMeasure::mixture(parts)
            }
            other => Err(Error::Format(format!("unknown distribution `{other}`"))),
        }
    }

    fn from_measure(m: &UnivariateMeasure) -> Self {
        match *m {
            UnivariateMeasure::Uniform { lo, hi } => Self::plain("uniform", vec![lo, hi]),
            UnivariateMeasure::Beta { alpha, beta } => Self::plain("beta", vec![alpha, beta]),
            UnivariateMeasure::Gamma { alpha, beta } => Self::plain("gamma", vec![alpha, beta]),
            UnivariateMeasure::TruncNormal {
                mu,
                sigma,
                tau0,
                tau1,
            } => {
                let mut e = Self::plain("normal", vec![mu, sigma]);
                if tau0.is_finite() || tau1.is_finite() {
                    e.truncation = Some([finite_or(tau0), finite_or(tau1)]);
                }
                e
            }
            UnivariateMeasure::Mixture(ref c) => {
                let mut e = Self::plain("mixture", vec![]);
                e.components = Some(
                    c.iter()
                        .map(|(w, m)| MeasureEntry {
                            weight: Some(*w),
                            ..Self::from_measure(m)
                        })
                        .collect(),
                );
                e
            }
        }
    }
}

impl PriorRepr {
    fn to_spec(&self) -> Result<PriorSpec> {
        match self {
            PriorRepr::Product { components } => PriorSpec::product(
                components
                    .iter()
                    .map(MeasureEntry::to_measure)
                    .collect::<Result<_>>()?,
            ),
            PriorRepr::Mvn { mean, cov } => {
                let p = mean.len();
                if cov.len() != p * p {
                    return Err(Error::Format(format!(
                        "`cov` needs {} entries for p = {p}, got {}",
                        p * p,
                        cov.len()
                    )));
                }
                PriorSpec::mvn(mean.clone(), DMatrix::from_row_slice(p, p, cov))
            }
            PriorRepr::Mixture { components } => PriorSpec::mixture(
                components
                    .iter()
                    .map(|c| Ok((c.weight, c.prior.to_spec()?)))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    fn from_spec(s: &PriorSpec) -> Self {
        match s {
            PriorSpec::Product(c) => PriorRepr::Product {
                components: c.iter().map(MeasureEntry::from_measure).collect(),
            },
            PriorSpec::Mvn { mean, cov } => PriorRepr::Mvn {
                mean: mean.clone(),
                cov: cov.transpose().iter().copied().collect(),
            },
            PriorSpec::Mixture(c) => PriorRepr::Mixture {
                components: c
                    .iter()
                    .map(|(w, s)| WeightedPrior {
                        weight: *w,
                        prior: Self::from_spec(s),
                    })
                    .collect(),
            },
        }
    }
}

impl From<&PriorSpec> for PriorFile {
    fn from(s: &PriorSpec) -> Self {
        PriorFile {
            version: PRIOR_FORMAT_VERSION.into(),
            prior: PriorRepr::from_spec(s),
            manifest: None,
        }
    }
}

impl TryFrom<PriorFile> for PriorSpec {
    type Error = Error;
    fn try_from(f: PriorFile) -> Result<Self> {
        check_version(&f.version)?;
        f.prior.to_spec()
    }
}

impl PriorSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PriorFile::from(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        if v.get("version").is_none() {
            return Err(Error::Format("prior file has no `version` field".into()));
        }
        PriorSpec::try_from(serde_json::from_value::<PriorFile>(v)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Content hash of the canonical file form.
    pub fn digest(&self) -> String {
        digest(&PriorFile::from(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_families() {
        let coord_mix = UnivariateMeasure::mixture(vec![
            (0.25, UnivariateMeasure::beta(2.0, 5.0).unwrap()),
            (
                0.75,
                UnivariateMeasure::trunc_normal(0.4, 0.2, 0.0, f64::INFINITY).unwrap(),
            ),
        ])
        .unwrap();
        let product = PriorSpec::product(vec![
            UnivariateMeasure::uniform(-1.0, 2.0).unwrap(),
            UnivariateMeasure::gamma(2.0, 3.0).unwrap(),
            coord_mix,
        ])
        .unwrap();
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let mvn = PriorSpec::mvn(vec![0.0, 1.0, 2.0], cov).unwrap();
        let mix = PriorSpec::mixture(vec![(0.5, product.clone()), (0.5, mvn.clone())]).unwrap();
        for spec in [product, mvn, mix] {
            let back = PriorSpec::from_json(&spec.to_json()).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.digest(), spec.digest());
        }
    }

    #[test]
    fn rejects_bad_files() {
        let bad_weights = r#"{"version":"1.0","type":"mixture","components":[
            {"weight":0.5,"prior":{"type":"product","components":[{"dist":"uniform","params":[0,1]}]}},
            {"weight":0.4,"prior":{"type":"product","components":[{"dist":"uniform","params":[0,1]}]}}]}"#;
        assert!(matches!(
            PriorSpec::from_json(bad_weights),
            Err(Error::InvalidMeasure(_))
        ));
        let wrong_major = r#"{"version":"2.0","type":"product","components":[{"dist":"uniform","params":[0,1]}]}"#;
        assert!(matches!(
            PriorSpec::from_json(wrong_major),
            Err(Error::Version { .. })
        ));
        let unknown =
            r#"{"version":"1.0","type":"product","components":[{"dist":"cauchy","params":[0,1]}]}"#;
        assert!(PriorSpec::from_json(unknown).is_err());
        let trunc_beta = r#"{"version":"1.0","type":"product","components":[{"dist":"beta","params":[1,1],"truncation":[0,0.5]}]}"#;
        assert!(PriorSpec::from_json(trunc_beta).is_err());
        let not_spd = r#"{"version":"1.0","type":"mvn","mean":[0,0],"cov":[1,2,2,1]}"#;
        assert!(PriorSpec::from_json(not_spd).is_err());
        let no_version = r#"{"type":"product","components":[{"dist":"uniform","params":[0,1]}]}"#;
        assert!(PriorSpec::from_json(no_version).is_err());
    }

    #[test]
    fn null_truncation_means_unbounded() {
        let s = r#"{"version":"1.0","type":"product","components":[{"dist":"normal","params":[1,2],"truncation":[0,null]}]}"#;
        let spec = PriorSpec::from_json(s).unwrap();
        assert_eq!(
            spec,
            PriorSpec::Product(vec![UnivariateMeasure::TruncNormal {
                mu: 1.0,
                sigma: 2.0,
                tau0: 0.0,
                tau1: f64::INFINITY
            }])
        );
    }
}
