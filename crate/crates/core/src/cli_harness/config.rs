//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::admm_engine::{AdmmConfig, Initialization, LossScale};
use crate::error::{Error, Result};
use crate::local_svm::SolverSettings;
use crate::wpa_core::Ridge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Pa,
    WpaCentral,
    Dwpa,
    DwpaAcc,
    Dsvm,
    DsvmAcc,
    SvmCentral,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pa,
        Method::WpaCentral,
        Method::Dwpa,
        Method::DwpaAcc,
        Method::Dsvm,
        Method::DsvmAcc,
        Method::SvmCentral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pa => "pa",
            Method::WpaCentral => "wpa_central",
            Method::Dwpa => "dwpa",
            Method::DwpaAcc => "dwpa_acc",
            Method::Dsvm => "dsvm",
            Method::DsvmAcc => "dsvm_acc",
            Method::SvmCentral => "svm_central",
        }
    }

    pub fn is_admm(self) -> bool {
        matches!(self, Method::Dwpa | Method::DwpaAcc | Method::Dsvm | Method::DsvmAcc)
    }

    pub fn is_accelerated(self) -> bool {
        matches!(self, Method::DwpaAcc | Method::DsvmAcc)
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method {s:?}; expected one of {}", names.join(", "))
            })
    }
}

/// Subcommands; each maps to one experiment family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Trace,
    Timing,
    Stability,
    Bias,
    Toyfig,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Trace => "trace",
            Command::Timing => "timing",
            Command::Stability => "stability",
            Command::Bias => "bias",
            Command::Toyfig => "toyfig",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Fresh toy sample per seed.
    Toy,
    Libsvm { train: PathBuf, test: Option<PathBuf> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub methods: Vec<Method>,
    pub data: DataSource,
    pub toy_train_size: usize,
    pub toy_test_size: usize,
    pub minority_fraction: f64,
    pub partitions: Vec<usize>,
    pub lambda: f64,
    /// Duality-gap target of the per-partition and central solvers.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Duality-gap target of each ADMM slave subproblem.
    pub subproblem_tolerance: f64,
    pub ridge: Ridge,
    pub rho: f64,
    pub iterations: usize,
    /// Overrelaxation weight of the `_acc` methods.
    pub alpha: f64,
    pub residual_stop: f64,
    pub init: Initialization,
    pub loss_scale: LossScale,
    pub workers: usize,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub planes_output: Option<PathBuf>,
    pub wall_clock: bool,
    /// `(M, L)` ladder of the stability experiment.
    pub sizes: Vec<(usize, usize)>,
    pub trials: usize,
    /// Sample sizes `N` of the bias experiment.
    pub sample_sizes: Vec<usize>,
    pub reference_factor: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "run".into(),
            methods: Vec::new(),
            data: DataSource::Toy,
            toy_train_size: 250,
            toy_test_size: 2000,
            minority_fraction: 0.2,
            partitions: vec![1, 10, 50],
            lambda: 1e-3,
            tolerance: 1e-6,
            max_epochs: 1000,
            subproblem_tolerance: 1e-8,
            ridge: Ridge::Auto,
            rho: 1.0,
            iterations: 500,
            alpha: 1.5,
            residual_stop: 0.0,
            init: Initialization::Consensus,
            loss_scale: LossScale::Normalized,
            workers: 0,
            seeds: vec![0],
            output: None,
            planes_output: None,
            wall_clock: true,
            sizes: vec![(2, 32), (4, 64), (8, 128)],
            trials: 20,
            sample_sizes: vec![3000, 6000],
            reference_factor: 50,
        }
    }
}

const ADMM_KEYS: [&str; 8] = [
    "rho",
    "iterations",
    "alpha",
    "residual_stop",
    "init",
    "loss_scale",
    "workers",
    "subproblem_tolerance",
];

pub const KEYS: [&str; 29] = [
    "experiment",
    "method",
    "data",
    "test_data",
    "toy_n",
    "toy_test_n",
    "minority_fraction",
    "partitions",
    "lambda",
    "tolerance",
    "max_epochs",
    "subproblem_tolerance",
    "ridge",
    "rho",
    "iterations",
    "alpha",
    "residual_stop",
    "init",
    "loss_scale",
    "workers",
    "seeds",
    "output",
    "planes_output",
    "wall_clock",
    "sizes",
    "trials",
    "sample_sizes",
    "reference_factor",
    "threads",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_size(key: &str, s: &str) -> Result<(usize, usize)> {
    let (m, l) = s
        .split_once('x')
        .ok_or_else(|| Error::config(key, format!("size {s:?} is not of the form MxL")))?;
    Ok((parse_value(key, m.trim())?, parse_value(key, l.trim())?))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("{value:?} is not a boolean"))),
    }
}

/// Splits `key = value` text into pairs; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Turns `--key value` / `--key=value` arguments into pairs.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::config(arg.clone(), "expected a `--key value` flag"))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(key, "flag is missing its value"))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = value.to_string(),
            "method" => {
                self.methods = parse_list::<Method>(key, value)?;
            }
            "data" => {
                let test = match &self.data {
                    DataSource::Libsvm { test, .. } => test.clone(),
                    DataSource::Toy => None,
                };
                self.data = if value == "toy" {
                    DataSource::Toy
                } else {
                    DataSource::Libsvm {
                        train: value.into(),
                        test,
                    }
                };
            }
            "test_data" => match &mut self.data {
                DataSource::Libsvm { test, .. } => *test = Some(value.into()),
                DataSource::Toy => {
                    return Err(Error::config(key, "test_data needs a LIBSVM `data` path set first"))
                }
            },
            "toy_n" => self.toy_train_size = parse_value(key, value)?,
            "toy_test_n" => self.toy_test_size = parse_value(key, value)?,
            "minority_fraction" => self.minority_fraction = parse_value(key, value)?,
            "partitions" => self.partitions = parse_list(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "tolerance" => self.tolerance = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "subproblem_tolerance" => self.subproblem_tolerance = parse_value(key, value)?,
            "ridge" => {
                self.ridge = match value {
                    "none" => Ridge::None,
                    "auto" => Ridge::Auto,
                    v => Ridge::Fixed(parse_value(key, v)?),
                }
            }
            "rho" => self.rho = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "residual_stop" => self.residual_stop = parse_value(key, value)?,
            "init" => {
                self.init = match value {
                    "consensus" => Initialization::Consensus,
                    "all_ones" => Initialization::AllOnes,
                    _ => return Err(Error::config(key, "expected consensus or all_ones")),
                }
            }
            "loss_scale" => {
                self.loss_scale = match value {
                    "normalized" => LossScale::Normalized,
                    "unit" => LossScale::Unit,
                    _ => return Err(Error::config(key, "expected normalized or unit")),
                }
            }
            "workers" | "threads" => self.workers = parse_value(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "output" => self.output = Some(value.into()),
            "planes_output" => self.planes_output = Some(value.into()),
            "wall_clock" => self.wall_clock = parse_bool(key, value)?,
            "sizes" => {
                self.sizes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_size(key, s))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = parse_value(key, value)?,
            "sample_sizes" => self.sample_sizes = parse_list(key, value)?,
            "reference_factor" => self.reference_factor = parse_value(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks ranges and the fields `command` needs.
    pub fn validate(&self, command: Command) -> Result<()> {
        let needs_method = !matches!(command, Command::Stability | Command::Toyfig);
        if needs_method && self.methods.is_empty() {
            return Err(Error::config("method", "required"));
        }
        if matches!(command, Command::Trace | Command::Timing)
            && self.methods.iter().any(|m| !m.is_admm())
        {
            return Err(Error::config(
                "method",
                format!("{} accepts only dwpa, dwpa_acc, dsvm, dsvm_acc", command.name()),
            ));
        }
        if command == Command::Bias
            && self
                .methods
                .iter()
                .any(|m| matches!(m, Method::WpaCentral | Method::DwpaAcc | Method::DsvmAcc))
        {
            return Err(Error::config("method", "bias accepts pa, dwpa, dsvm, svm_central"));
        }
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} must be > 0")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("tolerance", self.tolerance)?;
        positive("subproblem_tolerance", self.subproblem_tolerance)?;
        positive("rho", self.rho)?;
        if !(1.0..=2.0).contains(&self.alpha) {
            return Err(Error::config("alpha", format!("{} must lie in [1, 2]", self.alpha)));
        }
        if !(self.residual_stop >= 0.0) {
            return Err(Error::config("residual_stop", "must be >= 0"));
        }
        if let Ridge::Fixed(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::config("ridge", "must be none, auto, or a number >= 0"));
            }
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction < 1.0) {
            return Err(Error::config("minority_fraction", "must lie in (0, 1)"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be >= 1"));
        }
        if self.partitions.is_empty() || self.partitions.contains(&0) {
            return Err(Error::config("partitions", "needs one or more values >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "needs at least one seed"));
        }
        if self.toy_train_size < 4 || self.toy_test_size < 4 {
            return Err(Error::config("toy_n", "toy sample sizes must be >= 4"));
        }
        if self.experiment.is_empty() || self.experiment.contains(['\n', '#', '=']) {
            return Err(Error::config("experiment", "must be a nonempty single-line name"));
        }
        match command {
            Command::Stability => {
                if self.trials == 0 {
                    return Err(Error::config("trials", "must be >= 1"));
                }
                if self.sizes.iter().any(|&(m, l)| m == 0 || m * l < 8) {
                    return Err(Error::config("sizes", "each MxL needs M >= 1 and M*L >= 8"));
                }
            }
            Command::Bias => {
                if self.trials < 2 {
                    return Err(Error::config("trials", "bias needs at least two trials"));
                }
                if self.sample_sizes.is_empty() || self.reference_factor == 0 {
                    return Err(Error::config("sample_sizes", "needs sizes and a reference_factor >= 1"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Solver settings for per-partition and central training.
    pub fn solver(&self, seed: u64) -> SolverSettings {
        SolverSettings {
            lambda: self.lambda,
            tolerance: self.tolerance,
            max_epochs: self.max_epochs,
            seed,
        }
    }

    /// ADMM settings for `method` (overrelaxed iff it is an `_acc` method).
    pub fn admm(&self, method: Method, seed: u64) -> AdmmConfig {
        AdmmConfig {
            rho: self.rho,
            lambda: self.lambda,
            max_iters: self.iterations,
            overrelax_alpha: method.is_accelerated().then_some(self.alpha),
            residual_stop: self.residual_stop,
            subproblem: SolverSettings {
                tolerance: self.subproblem_tolerance,
                ..self.solver(seed)
            },
            init: self.init,
            loss_scale: self.loss_scale,
            workers: self.workers,
        }
    }

    /// Every key with its current value, parseable by [`parse_config`].
    pub fn serialize(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let skip_admm = !self.methods.is_empty() && !self.methods.iter().any(|m| m.is_admm());
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            if !(skip_admm && ADMM_KEYS.contains(&k)) {
                let _ = writeln!(s, "{k} = {v}");
            }
        };
        put("experiment", self.experiment.clone());
        put("method", self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        match &self.data {
            DataSource::Toy => put("data", "toy".into()),
            DataSource::Libsvm { train, test } => {
                put("data", train.display().to_string());
                if let Some(t) = test {
                    put("test_data", t.display().to_string());
                }
            }
        }
        put("toy_n", self.toy_train_size.to_string());
        put("toy_test_n", self.toy_test_size.to_string());
        put("minority_fraction", self.minority_fraction.to_string());
        put("partitions", join(&self.partitions));
        put("lambda", self.lambda.to_string());
        put("tolerance", self.tolerance.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("subproblem_tolerance", self.subproblem_tolerance.to_string());
        put(
            "ridge",
            match self.ridge {
                Ridge::None => "none".into(),
                Ridge::Auto => "auto".into(),
                Ridge::Fixed(r) => r.to_string(),
            },
        );
        put("rho", self.rho.to_string());
        put("iterations", self.iterations.to_string());
        put("alpha", self.alpha.to_string());
        put("residual_stop", self.residual_stop.to_string());
        put(
            "init",
            match self.init {
                Initialization::Consensus => "consensus",
                Initialization::AllOnes => "all_ones",
            }
            .into(),
        );
        put(
            "loss_scale",
            match self.loss_scale {
                LossScale::Normalized => "normalized",
                LossScale::Unit => "unit",
            }
            .into(),
        );
        put("workers", self.workers.to_string());
        put("seeds", join(&self.seeds));
        if let Some(o) = &self.output {
            put("output", o.display().to_string());
        }
        if let Some(o) = &self.planes_output {
            put("planes_output", o.display().to_string());
        }
        put("wall_clock", self.wall_clock.to_string());
        put(
            "sizes",
            self.sizes
                .iter()
                .map(|(m, l)| format!("{m}x{l}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("trials", self.trials.to_string());
        put("sample_sizes", join(&self.sample_sizes));
        put("reference_factor", self.reference_factor.to_string());
        s
    }
}

/// Builds a validated config from file text and `--key value` flags; flags
/// win over the file, later settings over earlier ones.
pub fn parse_config(command: Command, file_text: Option<&str>, flags: &[String]) -> Result<ExperimentConfig> {
    let mut pairs = match file_text {
        Some(t) => parse_pairs(t)?,
        None => Vec::new(),
    };
    let flag_pairs = parse_flags(flags)?;
    pairs.extend(flag_pairs.into_iter().filter(|(k, _)| k != "config"));

    let mut config = ExperimentConfig::default();
    for (k, _) in &pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::config(k.clone(), "unknown key"));
        }
    }
    // `data` before `test_data`, whatever the order given
    let rank = |k: &str| if k == "data" { 0 } else { 1 };
    let mut ordered: Vec<&(String, String)> = pairs.iter().collect();
    ordered.sort_by_key(|(k, _)| rank(k));
    for (k, v) in ordered {
        config.apply(k, v)?;
    }

    let has_admm = config.methods.iter().any(|m| m.is_admm())
        || matches!(command, Command::Trace | Command::Timing);
    let uses_admm = has_admm || (command == Command::Bias && config.methods.is_empty());
    if !uses_admm && !config.methods.is_empty() {
        if let Some((k, _)) = pairs.iter().find(|(k, _)| ADMM_KEYS.contains(&k.as_str())) {
            return Err(Error::config(
                k.clone(),
                "ADMM settings need an ADMM method (dwpa, dwpa_acc, dsvm, dsvm_acc)",
            ));
        }
    }
    config.validate(command)?;
    Ok(config)
}

/// Extracts a `--config FILE` flag from the override list.
pub fn config_path(flags: &[String]) -> Option<PathBuf> {
    let mut it = flags.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}
