//! Channel spec grammar: `depolarizing:<p>` | `chi:<file>` | `intercept:<basis>[+<basis>...]`.

use std::path::PathBuf;

use mdi_core::channels::{depolarizing, from_chi, intercept_resend, Channel, ChiFile, QubitBasis};
use mdi_core::tomography::PauliBasis;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Depolarizing(f64),
    Chi(PathBuf),
    /// Equal-weight intercept-resend over the listed bases.
    Intercept(Vec<PauliBasis>),
}

impl ChannelSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let usage = |msg: String| CliError::Usage(format!("channel spec {text:?}: {msg}"));
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| usage("expected <kind>:<argument>".into()))?;
        match kind {
            "depolarizing" => {
                let p: f64 = arg.parse().map_err(|_| usage(format!("invalid strength {arg:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(usage(format!("strength {p} outside [0, 1]")));
                }
                Ok(ChannelSpec::Depolarizing(p))
            }
            "chi" if !arg.is_empty() => Ok(ChannelSpec::Chi(PathBuf::from(arg))),
            "intercept" => {
                let bases = arg
                    .split('+')
                    .map(|b| match b {
                        "X" | "Y" | "Z" => b.parse::<PauliBasis>().map_err(|e| usage(e.to_string())),
                        _ => Err(usage(format!("unknown basis {b:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ChannelSpec::Intercept(bases))
            }
            _ => Err(usage(format!("unknown channel kind {kind:?}"))),
        }
    }

    pub fn build(&self) -> Result<Channel, CliError> {
        match self {
            ChannelSpec::Depolarizing(p) => depolarizing(*p).map_err(CliError::from_core),
            ChannelSpec::Chi(path) => {
                let file = ChiFile::read(path).map_err(|e| CliError::data(path.display(), e))?;
                let chi = file.matrix().map_err(|e| CliError::data(path.display(), e))?;
                from_chi(&chi).map_err(|e| CliError::data(path.display(), e))
            }
            ChannelSpec::Intercept(bases) => {
                let qb: Vec<QubitBasis> = bases.iter().map(|b| b.qubit_basis()).collect();
                let w = vec![1.0 / bases.len() as f64; bases.len()];
                intercept_resend(&qb, &w).map_err(CliError::from_core)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ChannelSpec::Depolarizing(p) => format!("depolarizing:{p}"),
            ChannelSpec::Chi(path) => format!("chi:{}", path.display()),
            ChannelSpec::Intercept(bases) => {
                let names: Vec<String> = bases.iter().map(|b| b.to_string()).collect();
                format!("intercept:{}", names.join("+"))
            }
        }
    }
}
