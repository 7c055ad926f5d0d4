//! JSON instance and report files, version 1.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::expr::parse_entitlement;
use super::verify::Verdict;
use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::measure::{Piece, RawValuation, Tolerances, Valuation};
use crate::protocol::QueryLedger;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntitlementSpec {
    Number(f64),
    Expression(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerEntry {
    pub entitlement: EntitlementSpec,
    pub valuation: RawValuation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: u32,
    pub players: Vec<PlayerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Deserializes `text`, reporting failures with the JSON path of the offending field.
pub fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." {
            String::new()
        } else {
            format!(" at {path}")
        };
        Error::input(origin, format!("{}{path}", e.inner()))
    })
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl InstanceFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        from_json(text, "instance")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files serialize") + "\n"
    }

    /// Validates the file and builds the instance.
    pub fn to_instance(&self) -> Result<Instance> {
        if self.format != FORMAT_VERSION {
            return Err(Error::input(
                "format",
                format!(
                    "unsupported format {}, expected {FORMAT_VERSION}",
                    self.format
                ),
            ));
        }
        if self.players.is_empty() {
            return Err(Error::input("players", "at least one player is required"));
        }
        let tolerances = self.tolerances.unwrap_or_default();
        tolerances
            .validate()
            .map_err(|e| Error::input("tolerances", e.to_string()))?;

        let mut valuations = Vec::with_capacity(self.players.len());
        let mut entitlements = Vec::with_capacity(self.players.len());
        let mut exact = Vec::with_capacity(self.players.len());
        for (i, player) in self.players.iter().enumerate() {
            let raw = &player.valuation;
            let valuation = Valuation::with_mass_tolerance(
                raw.breakpoints.clone(),
                raw.densities.clone(),
                tolerances.norm,
            )
            .map_err(|e| Error::input(format!("players[{i}].valuation"), e.to_string()))?;
            valuations.push(valuation);
            let (value, rational) = match &player.entitlement {
                EntitlementSpec::Number(x) => (*x, None),
                EntitlementSpec::Expression(text) => {
                    let parsed = parse_entitlement(text).map_err(|e| {
                        Error::input(format!("players[{i}].entitlement"), e.to_string())
                    })?;
                    (parsed.value, parsed.exact)
                }
            };
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::input(
                    format!("players[{i}].entitlement"),
                    format!("entitlement must be positive, got {value}"),
                ));
            }
            entitlements.push(value);
            exact.push(rational);
        }
        Instance::with_parts(valuations, entitlements, exact, tolerances)
            .map_err(|e| Error::input("players", e.to_string()))
    }
}

/// Reads, validates and builds the instance stored at `path`.
pub fn parse_instance(path: &Path) -> Result<Instance> {
    let text = read_file(path)?;
    let file: InstanceFile = from_json(&text, &path.display().to_string())?;
    file.to_instance().map_err(|e| match e {
        Error::Input {
            path: field,
            message,
        } => Error::input(path.display().to_string(), format!("{field}: {message}")),
        other => other,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerOutcome {
    pub piece: Piece,
    pub value: f64,
    pub entitlement: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: u32,
    pub algorithm: String,
    #[serde(default)]
    pub params: serde_json::Value,
    pub players: Vec<PlayerOutcome>,
    pub ledger: QueryLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<serde_json::Value>,
    pub verdict: Verdict,
}

impl ReportFile {
    pub fn new(
        algorithm: &str,
        params: serde_json::Value,
        allocation: &Allocation,
        ledger: QueryLedger,
        trace: Option<serde_json::Value>,
        verdict: Verdict,
    ) -> Self {
        let players = allocation
            .pieces()
            .iter()
            .zip(allocation.report())
            .map(|(piece, r)| PlayerOutcome {
                piece: piece.clone(),
                value: r.value,
                entitlement: r.entitlement,
                slack: r.slack,
            })
            .collect();
        ReportFile {
            format: FORMAT_VERSION,
            algorithm: algorithm.to_string(),
            params,
            players,
            ledger,
            trace,
            verdict,
        }
    }

    pub fn pieces(&self) -> Vec<Piece> {
        self.players.iter().map(|p| p.piece.clone()).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let report: ReportFile = from_json(text, "report")?;
        if report.format != FORMAT_VERSION {
            return Err(Error::input(
                "format",
                format!(
                    "unsupported format {}, expected {FORMAT_VERSION}",
                    report.format
                ),
            ));
        }
        Ok(report)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}
