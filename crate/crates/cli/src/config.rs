//! Run configuration: JSON file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use cdcv::backtest::BacktestConfig;
use cdcv::bicop::CopulaFamily;
use cdcv::cdcv::CdcvConfig;
use cdcv::clustering::{ClusteringConfig, Linkage, Metric, StoppingRule};
use cdcv::generator::GeneratorConfig;
use cdcv::indexing::{IndexConfig, IndexRule, MarketSource};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Returns CSV with a leading date column.
    pub data: Option<PathBuf>,
    /// Optional `asset,label` CSV; when set, clustering is replaced by these labels.
    pub labels: Option<PathBuf>,
    /// Optional `asset,market_cap` CSV for cap-weighted indexes.
    pub market_caps: Option<PathBuf>,
    pub window: usize,
    /// First row of the fitted window; defaults to the last full window.
    pub window_start: Option<usize>,
    pub metric: Metric,
    pub linkage: Linkage,
    /// Maximum cluster size.
    pub a: Option<usize>,
    /// Number of clusters; merges continue to one cluster when unset.
    pub b: Option<usize>,
    pub index_rule: IndexRule,
    pub upsilon: f64,
    pub market_source: MarketSource,
    pub severity: f64,
    pub seed: u64,
    pub families: Vec<CopulaFamily>,
    pub alphas: Vec<f64>,
    pub n_sims: usize,
    pub output: PathBuf,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let index = IndexConfig::default();
        Self {
            data: None,
            labels: None,
            market_caps: None,
            window: cdcv::panel::DEFAULT_WINDOW,
            window_start: None,
            metric: Metric::KendallTauBased,
            linkage: Linkage::AdaptedSingle,
            a: None,
            b: Some(15),
            index_rule: index.rule,
            upsilon: index.upsilon,
            market_source: index.market_source,
            severity: index.severity,
            seed: 0,
            families: CopulaFamily::PARAMETRIC.to_vec(),
            alphas: vec![0.95, 0.99],
            n_sims: cdcv::backtest::DEFAULT_SIMS,
            output: PathBuf::from("out"),
            generator: GeneratorConfig::default(),
        }
    }
}

/// Flags shared by every command; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub labels: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub market_caps: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub window_start: Option<usize>,
    /// Euclidean, Manhattan, PearsonBased, KendallTauBased or SpearmanRhoBased
    #[arg(long)]
    pub metric: Option<String>,
    /// Single, Complete, Average or AdaptedSingle
    #[arg(long)]
    pub linkage: Option<String>,
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    /// SimpleMean, MarketCapWeighted, KendallTauWeighted, VolatilityWeighted or FirstPrincipalComponent
    #[arg(long)]
    pub index_rule: Option<String>,
    #[arg(long)]
    pub upsilon: Option<f64>,
    /// FromAssets or FromClusterIndexes
    #[arg(long)]
    pub market_source: Option<String>,
    #[arg(long)]
    pub severity: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of Gaussian, StudentT, Clayton, Frank
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Comma-separated VaR confidence levels, e.g. 0.95,0.99
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub n_sims: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(flag: &str, s: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Usage(format!("--{flag}: unknown value {s:?}")))
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

impl ConfigArgs {
    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => read_config(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone().into();
                }
            )*};
        }
        set!(data, labels, market_caps, window_start, a, b);
        if let Some(v) = self.window {
            c.window = v;
        }
        if let Some(v) = self.upsilon {
            c.upsilon = v;
        }
        if let Some(v) = self.severity {
            c.severity = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.n_sims {
            c.n_sims = v;
        }
        if let Some(v) = &self.output {
            c.output = v.clone();
        }
        if let Some(v) = &self.alphas {
            c.alphas = v.clone();
        }
        if let Some(s) = &self.metric {
            c.metric = parse_enum("metric", s)?;
        }
        if let Some(s) = &self.linkage {
            c.linkage = parse_enum("linkage", s)?;
        }
        if let Some(s) = &self.index_rule {
            c.index_rule = parse_enum("index-rule", s)?;
        }
        if let Some(s) = &self.market_source {
            c.market_source = parse_enum("market-source", s)?;
        }
        if let Some(v) = &self.families {
            c.families = v.iter().map(|s| parse_enum("families", s.trim())).collect::<Result<_, _>>()?;
        }
        Ok(c)
    }
}

impl RunConfig {
    pub fn data_path(&self) -> Result<&Path, CliError> {
        self.data.as_deref().ok_or_else(|| CliError::Usage("no data file given (--data or \"data\" in the config)".into()))
    }

    pub fn cdcv_config(&self) -> Result<CdcvConfig, CliError> {
        let market_caps = match &self.market_caps {
            Some(p) => Some(cdcv::indexing::load_market_caps(p)?),
            None => None,
        };
        let config = CdcvConfig {
            clustering: ClusteringConfig {
                metric: self.metric,
                linkage: self.linkage,
                max_size: self.a,
                stop: self.b.map_or(StoppingRule::None, StoppingRule::Clusters),
            },
            index: IndexConfig {
                rule: self.index_rule,
                upsilon: self.upsilon,
                market_source: self.market_source,
                severity: self.severity,
                market_caps,
            },
            families: self.families.clone(),
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn backtest_config(&self) -> Result<BacktestConfig, CliError> {
        Ok(BacktestConfig { model: self.cdcv_config()?, window: self.window, n_sims: self.n_sims, weights: None })
    }
}
