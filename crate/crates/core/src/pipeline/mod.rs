//! End-to-end fitting, model persistence and simulation.

mod fit;
pub(crate) mod simulate;

pub use fit::fit_all;
pub use simulate::{simulate, SimulationOutput};

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::arma::{ArmaModel, LjungBox};
use crate::calendar::Season;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::renewal::{PairKind, RenewalModel};
use crate::residuals::ResidualModel;
use crate::seasonal::CoefficientModel;
use crate::stats::EmpiricalCdf;
use crate::steepness::SteepnessCurve;

pub const SCHEMA_VERSION: &str = "wavesim-model/1";
/// Seasonal fits explaining less variance than this are flagged.
pub const SEASONAL_R2_TARGET: f64 = 0.9;
/// Lags of the Ljung-Box whiteness check on ARMA residuals.
pub const LJUNG_BOX_LAGS: usize = 24;

const SECTIONS: [&str; 11] = [
    "provenance",
    "config",
    "steepness",
    "hm0_cdf",
    "tm02_detrended_cdf",
    "coefficients",
    "arma_hm0",
    "arma_tm02",
    "residuals",
    "renewal",
    "diagnostics",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine_version: String,
    pub source_id: String,
    pub origin_year: i32,
    pub years: usize,
    /// SHA-256 of the training series; stands in for a fit timestamp so that
    /// refitting the same data gives a byte-identical model file.
    pub data_sha256: String,
    pub training_hm0_max: f64,
    pub training_tm02_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalR2 {
    pub process: String,
    pub r2: f64,
    pub meets_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmaDiagnostic {
    pub process: String,
    pub p: usize,
    pub q: usize,
    pub aic: f64,
    pub ljung_box: LjungBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCheck {
    pub label: String,
    pub n_pairs: usize,
    pub empirical: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gaps_filled: usize,
    pub anomalies_masked: usize,
    pub seasonal_r2: Vec<SeasonalR2>,
    pub arma: Vec<ArmaDiagnostic>,
    pub residual_tau: Vec<TauCheck>,
    pub renewal_tau: Vec<TauCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub steepness: SteepnessCurve,
    pub hm0_cdf: EmpiricalCdf,
    /// Law of `tm02 - t_min(hm0)`.
    pub tm02_detrended_cdf: EmpiricalCdf,
    pub coefficients: CoefficientModel,
    pub arma_hm0: ArmaModel,
    pub arma_tm02: ArmaModel,
    pub residuals: ResidualModel,
    pub renewal: RenewalModel,
    pub diagnostics: Diagnostics,
}

impl FittedModel {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.steepness.validate()?;
        if !(self.hm0_cdf.min() > 0.0) {
            return Err(Error::invariant("hm0 margin must be strictly positive"));
        }
        if self.tm02_detrended_cdf.min() < 0.0 {
            return Err(Error::invariant(
                "detrended period margin must be non-negative",
            ));
        }
        self.coefficients.validate()?;
        self.arma_hm0.validate()?;
        self.arma_tm02.validate()?;
        self.residuals.validate()?;
        self.renewal.validate()
    }

    fn canonical(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn checksum(&self) -> Result<String> {
        Ok(checksum_of(&self.canonical()?))
    }

    pub fn to_json(&self) -> Result<String> {
        let model = self.canonical()?;
        let envelope = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "checksum": checksum_of(&model),
            "model": model,
        });
        Ok(serde_json::to_string_pretty(&envelope)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text)?;
        match doc.get("schema_version").and_then(Value::as_str) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(Error::Schema(format!(
                    "model schema `{other}` is not supported (expected `{SCHEMA_VERSION}`)"
                )))
            }
            None => return Err(Error::Schema("model file lacks `schema_version`".into())),
        }
        let model = doc
            .get_mut("model")
            .map(Value::take)
            .ok_or_else(|| Error::Schema("model file lacks section `model`".into()))?;
        let obj = model
            .as_object()
            .ok_or_else(|| Error::Schema("section `model` is not an object".into()))?;
        for s in SECTIONS {
            if !obj.contains_key(s) {
                return Err(Error::Schema(format!("model file lacks section `{s}`")));
            }
        }
        let stored = doc
            .get("checksum")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Schema("model file lacks `checksum`".into()))?;
        let computed = checksum_of(&model);
        if stored != computed {
            return Err(Error::Checksum {
                stored: stored.to_string(),
                computed,
            });
        }
        let m: FittedModel = serde_json::from_value(model)
            .map_err(|e| Error::Schema(format!("model section malformed: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

fn checksum_of(v: &Value) -> String {
    let bytes = serde_json::to_vec(v).expect("a JSON value always serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn save_model(model: &FittedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedModel> {
    FittedModel::from_json(&std::fs::read_to_string(path)?)
}

pub(crate) fn pair_label(season: Season, kind: PairKind) -> String {
    let k = match kind {
        PairKind::NorthToSouthwest => "n_to_sw",
        PairKind::SouthwestToNorth => "sw_to_n",
    };
    format!("{season}/{k}")
}
