//! Flat JSON configuration with command-line overrides.
//!
//! Every key of the config file has a flag of the same name (underscores
//! become dashes). A flag given on the command line wins over the file, and
//! the file wins over the built-in default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sparsevar_core::connectedness::{DEFAULT_HORIZON, DEFAULT_WINDOW};
use sparsevar_core::dataset::{ImputeConfig, Transform};
use sparsevar_core::graph::GraphFormat;
use sparsevar_core::penalty::PenaltyFamily;
use sparsevar_core::screening::{IsisConfig, LambdaRule};
use sparsevar_core::selection::DfMode;
use sparsevar_core::synthetic::SparseVarDesign;

use crate::error::{CliError, CliResult};

/// Raw settings as they appear in a config file or on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Price panel CSV (`date` column followed by one column per contract).
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Contract metadata CSV with `symbol,type,description` columns.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// Connectedness table CSV read by `export-graph`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// `diff` or `logdiff`.
    #[arg(long)]
    pub transform: Option<String>,
    #[arg(long)]
    pub impute_sweeps: Option<usize>,
    #[arg(long)]
    pub impute_chains: Option<usize>,
    #[arg(long)]
    pub impute_donors: Option<usize>,

    /// `lasso` or `scad`.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub scad_a: Option<f64>,
    /// Fixed lag order; disables lag selection.
    #[arg(long, conflicts_with = "p_max")]
    pub p: Option<usize>,
    /// Largest lag order tried by BIC selection.
    #[arg(long)]
    pub p_max: Option<usize>,
    /// Parameter count in the criteria: `nominal` or `sparse`.
    #[arg(long)]
    pub df_mode: Option<String>,
    /// Fixed penalty level; disables BIC selection of lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_points: Option<usize>,
    #[arg(long)]
    pub lambda_ratio: Option<f64>,
    #[arg(long)]
    pub d_keep: Option<usize>,
    #[arg(long)]
    pub isis_max_iter: Option<usize>,

    /// Forecast horizon; repeat the flag for several horizons.
    #[arg(long = "horizon")]
    #[serde(default, deserialize_with = "one_or_many")]
    pub horizon: Option<Vec<usize>>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub step: Option<usize>,
    /// Row-normalize the tables recorded by `roll`.
    #[arg(long)]
    pub roll_normalized: Option<bool>,
    /// Multiplier applied to values in table CSVs.
    #[arg(long)]
    pub table_scale: Option<f64>,
    /// Build the network from row-normalized shares.
    #[arg(long)]
    pub graph_normalized: Option<bool>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `dot` or `json`.
    #[arg(long)]
    pub format: Option<String>,

    /// Number of simulated variables.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of simulated return observations.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Number of synthetic contract types in the simulated metadata.
    #[arg(long)]
    pub groups: Option<usize>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<usize>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(Option::<OneOrMany>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    /// Values set in `flags` replace those in `self`. A lag order flag of
    /// either kind replaces both lag settings of the file.
    pub fn overridden_by(mut self, flags: &Settings) -> Self {
        if flags.p.is_some() || flags.p_max.is_some() {
            self.p = flags.p;
            self.p_max = flags.p_max;
        }
        overlay!(
            self,
            flags,
            panel,
            metadata,
            table,
            out,
            seed,
            transform,
            impute_sweeps,
            impute_chains,
            impute_donors,
            estimator,
            scad_a,
            df_mode,
            lambda,
            lambda_points,
            lambda_ratio,
            d_keep,
            isis_max_iter,
            horizon,
            window,
            step,
            roll_normalized,
            table_scale,
            graph_normalized,
            threshold,
            format,
            k,
            t,
            density,
            scale,
            noise_sd,
            burn_in,
            groups
        );
        self
    }

    pub fn resolve(&self) -> CliResult<RunConfig> {
        let bad = |msg: String| CliError::input(msg);
        let transform: Transform = parse_opt(&self.transform, "diff")?;
        let mut family: PenaltyFamily = parse_opt(&self.estimator, "lasso")?;
        if let (PenaltyFamily::Scad { a }, Some(v)) = (&mut family, self.scad_a) {
            if !(v > 2.0) {
                return Err(bad(format!("scad_a must exceed 2, got {v}")));
            }
            *a = v;
        }
        let df_mode = match self.df_mode.as_deref().unwrap_or("nominal") {
            "nominal" => DfMode::Nominal,
            "sparse" => DfMode::Sparse,
            other => return Err(bad(format!("unknown df_mode `{other}` (expected nominal or sparse)"))),
        };
        let lag = match (self.p, self.p_max) {
            (Some(_), Some(_)) => return Err(bad("set either p or p_max, not both".into())),
            (Some(p), None) => LagChoice::Fixed(p),
            (None, m) => LagChoice::Bic(m.unwrap_or(3)),
        };
        let (LagChoice::Fixed(p) | LagChoice::Bic(p)) = lag;
        if p == 0 {
            return Err(bad("lag order must be >= 1".into()));
        }

        let defaults = IsisConfig::default();
        let lambda = match self.lambda {
            Some(l) if l >= 0.0 && l.is_finite() => LambdaRule::Fixed { lambda: l },
            Some(l) => return Err(bad(format!("lambda must be a finite value >= 0, got {l}"))),
            None => {
                let LambdaRule::Bic { n_points, ratio } = LambdaRule::default() else {
                    unreachable!("default rule is BIC")
                };
                let n_points = self.lambda_points.unwrap_or(n_points);
                let ratio = self.lambda_ratio.unwrap_or(ratio);
                if n_points < 2 {
                    return Err(bad(format!("lambda_points must be >= 2, got {n_points}")));
                }
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(bad(format!("lambda_ratio must lie in (0, 1), got {ratio}")));
                }
                LambdaRule::Bic { n_points, ratio }
            }
        };
        if self.d_keep == Some(0) {
            return Err(bad("d_keep must be >= 1".into()));
        }
        let isis = IsisConfig {
            family,
            lambda,
            d_keep: self.d_keep,
            max_iter: self.isis_max_iter.unwrap_or(defaults.max_iter),
            ..defaults
        };
        if isis.max_iter == 0 {
            return Err(bad("isis_max_iter must be >= 1".into()));
        }

        let base = ImputeConfig::default();
        let impute = ImputeConfig {
            sweeps: self.impute_sweeps.unwrap_or(base.sweeps),
            chains: self.impute_chains.unwrap_or(base.chains),
            donors: self.impute_donors.unwrap_or(base.donors),
            seed: self.seed.unwrap_or(0),
        };
        if impute.chains == 0 || impute.donors == 0 {
            return Err(bad("impute_chains and impute_donors must be >= 1".into()));
        }

        let mut horizons = self.horizon.clone().unwrap_or_else(|| vec![DEFAULT_HORIZON]);
        if horizons.is_empty() || horizons.contains(&0) {
            return Err(bad("horizons must be >= 1".into()));
        }
        horizons.sort_unstable();
        horizons.dedup();
        let window = self.window.unwrap_or(DEFAULT_WINDOW);
        let step = self.step.unwrap_or(1);
        if window < 2 || step == 0 {
            return Err(bad(format!("window must be >= 2 and step >= 1, got {window} and {step}")));
        }
        let table_scale = self.table_scale.unwrap_or(100.0);
        if !(table_scale > 0.0 && table_scale.is_finite()) {
            return Err(bad(format!("table_scale must be positive, got {table_scale}")));
        }
        let threshold = self.threshold.unwrap_or(0.0);
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(bad(format!("threshold must be >= 0, got {threshold}")));
        }
        let format: GraphFormat = parse_opt(&self.format, "dot")?;

        let simulation = SimulationConfig {
            design: SparseVarDesign {
                k: self.k.unwrap_or(5),
                p: self.p.unwrap_or(1),
                density: self.density.unwrap_or(0.2),
                scale: self.scale.unwrap_or(0.4),
                noise_sd: self.noise_sd.unwrap_or(1.0),
            },
            t: self.t.unwrap_or(200),
            burn_in: self.burn_in.unwrap_or(100),
            groups: self.groups.unwrap_or(1),
        };
        if simulation.t == 0 || simulation.groups == 0 || simulation.groups > simulation.design.k.max(1) {
            return Err(bad(format!(
                "need t >= 1 and 1 <= groups <= k, got t = {}, groups = {}",
                simulation.t, simulation.groups
            )));
        }

        for (name, path) in [("panel", &self.panel), ("metadata", &self.metadata), ("table", &self.table), ("out", &self.out)] {
            if path.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return Err(bad(format!("{name} path is empty")));
            }
        }

        Ok(RunConfig {
            panel: self.panel.clone(),
            metadata: self.metadata.clone(),
            table: self.table.clone(),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed.unwrap_or(0),
            transform,
            impute,
            isis,
            lag,
            df_mode,
            horizons,
            window,
            step,
            roll_normalized: self.roll_normalized.unwrap_or(false),
            table_scale,
            graph_normalized: self.graph_normalized.unwrap_or(true),
            threshold,
            format,
            simulation,
        })
    }
}

fn parse_opt<T>(value: &Option<String>, default: &str) -> CliResult<T>
where
    T: std::str::FromStr<Err = sparsevar_core::Error>,
{
    value.as_deref().unwrap_or(default).parse().map_err(CliError::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", content = "p", rename_all = "snake_case")]
pub enum LagChoice {
    Fixed(usize),
    /// Pick `1..=p_max` by BIC.
    Bic(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub design: SparseVarDesign,
    pub t: usize,
    pub burn_in: usize,
    pub groups: usize,
}

/// Fully resolved configuration, echoed into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub panel: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub transform: Transform,
    #[serde(serialize_with = "ser_impute")]
    pub impute: ImputeConfig,
    pub isis: IsisConfig,
    pub lag: LagChoice,
    pub df_mode: DfMode,
    pub horizons: Vec<usize>,
    pub window: usize,
    pub step: usize,
    pub roll_normalized: bool,
    pub table_scale: f64,
    pub graph_normalized: bool,
    pub threshold: f64,
    #[serde(serialize_with = "ser_format")]
    pub format: GraphFormat,
    pub simulation: SimulationConfig,
}

fn ser_impute<S: serde::Serializer>(c: &ImputeConfig, s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct View {
        sweeps: usize,
        chains: usize,
        donors: usize,
        seed: u64,
    }
    View {
        sweeps: c.sweeps,
        chains: c.chains,
        donors: c.donors,
        seed: c.seed,
    }
    .serialize(s)
}

fn ser_format<S: serde::Serializer>(f: &GraphFormat, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match f {
        GraphFormat::Dot => "dot",
        GraphFormat::Json => "json",
    })
}

impl RunConfig {
    pub fn require_panel(&self) -> CliResult<&Path> {
        self.panel.as_deref().ok_or_else(|| CliError::input("no input panel given (use --panel or the config file)"))
    }

    pub fn graph_extension(&self) -> &'static str {
        match self.format {
            GraphFormat::Dot => "dot",
            GraphFormat::Json => "json",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: Settings = serde_json::from_str(r#"{"seed": 3, "p": 2, "horizon": 8, "estimator": "scad"}"#).unwrap();
        let flags = Settings {
            seed: Some(9),
            p_max: Some(4),
            ..Default::default()
        };
        let cfg = file.overridden_by(&flags).resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lag, LagChoice::Bic(4));
        assert_eq!(cfg.horizons, vec![8]);
        assert_eq!(cfg.isis.family.name(), "scad");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<Settings>(r#"{"sed": 1}"#).is_err());
        let bad = Settings {
            estimator: Some("ridge".into()),
            ..Default::default()
        };
        assert_eq!(bad.resolve().unwrap_err().exit_code(), 2);
        let bad = Settings {
            horizon: Some(vec![0]),
            ..Default::default()
        };
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn horizon_list_in_file() {
        let s: Settings = serde_json::from_str(r#"{"horizon": [10, 8, 10]}"#).unwrap();
        assert_eq!(s.resolve().unwrap().horizons, vec![8, 10]);
    }
}
