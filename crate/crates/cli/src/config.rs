//! TOML run configuration: `[problem]`, `[grid]`, `[solve]`, `[experiment]`, `[ladder]`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use normsolve::solver::{GridSpec, Mode, SolveConfig, Support};
use normsolve::{Params, Spacing};
use toml::{Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Solve,
    Thresholds,
    Profile,
    Evolve,
    Collapse,
    Bubble,
    Betalimit,
    Cutoff,
    Report,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Solve,
        Experiment::Thresholds,
        Experiment::Profile,
        Experiment::Evolve,
        Experiment::Collapse,
        Experiment::Bubble,
        Experiment::Betalimit,
        Experiment::Cutoff,
        Experiment::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Thresholds => "thresholds",
            Experiment::Profile => "profile",
            Experiment::Evolve => "evolve",
            Experiment::Collapse => "collapse",
            Experiment::Bubble => "bubble",
            Experiment::Betalimit => "betalimit",
            Experiment::Cutoff => "cutoff",
            Experiment::Report => "report",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    fn needs_problem(self) -> bool {
        !matches!(self, Experiment::Profile | Experiment::Cutoff | Experiment::Report)
    }
}

/// Parameter sequences for the sweep experiments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ladder {
    /// `(b₁, b₂)` points for `collapse` and `bubble`.
    pub masses: Vec<(f64, f64)>,
    /// Decreasing couplings for `betalimit`.
    pub betas: Vec<f64>,
    /// Bubble scales for `cutoff`.
    pub eps: Vec<f64>,
}

impl Ladder {
    fn is_empty(&self) -> bool {
        self.masses.is_empty() && self.betas.is_empty() && self.eps.is_empty()
    }
}

/// Settings in `[experiment]` beyond its kind; each experiment reads its own.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSettings {
    pub dt: f64,
    pub t_end: f64,
    pub amplitude: f64,
    pub perturbations: usize,
    pub power: u32,
    pub cutoff_n: usize,
    pub refine: bool,
    pub results_dir: Option<PathBuf>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            dt: 2e-3,
            t_end: 5.0,
            amplitude: 1e-3,
            perturbations: 0,
            power: 3,
            cutoff_n: 4096,
            refine: false,
            results_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub problem: Option<Params>,
    /// Space dimension when there is no `[problem]` (profiles).
    pub dim: Option<usize>,
    pub solve: SolveConfig,
    pub settings: ExperimentSettings,
    pub output_dir: PathBuf,
    pub ladder: Option<Ladder>,
}

impl RunConfig {
    pub fn dim(&self) -> Option<usize> {
        self.problem.map(|p| p.dim).or(self.dim)
    }
}

/// Invalid or missing entry, located by its dotted key path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// One section, remembering which keys were read.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self, ConfigError> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return err(name, "expected a table"),
        };
        Ok(Section { name, table, used: BTreeSet::new() })
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&mut self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => as_f64(v).map(Some).ok_or_else(|| ConfigError {
                path: self.path(key),
                message: "expected a number".into(),
            }),
        }
    }

    fn req_f64(&mut self, key: &'static str) -> Result<f64, ConfigError> {
        self.f64(key)?.map_or_else(|| err(self.path(key), "missing (expected a number)"), Ok)
    }

    fn uint(&mut self, key: &'static str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => err(self.path(key), "expected a nonnegative integer"),
        }
    }

    fn bool(&mut self, key: &'static str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => err(self.path(key), "expected true or false"),
        }
    }

    fn string(&mut self, key: &'static str) -> Result<Option<&'a str>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => err(self.path(key), "expected a string"),
        }
    }

    fn numbers(&mut self, key: &'static str) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| as_f64(v).ok_or_else(|| ConfigError {
                    path: format!("{}[{i}]", self.path(key)),
                    message: "expected a number".into(),
                }))
                .collect(),
            Some(_) => err(self.path(key), "expected an array of numbers"),
        }
    }

    fn pairs(&mut self, key: &'static str) -> Result<Vec<(f64, f64)>, ConfigError> {
        let Some(raw) = self.raw(key) else { return Ok(Vec::new()) };
        let Value::Array(a) = raw else {
            return err(self.path(key), "expected an array of [b1, b2] pairs");
        };
        a.iter()
            .enumerate()
            .map(|(i, v)| match v.as_array().map(|x| x.iter().map(as_f64).collect::<Vec<_>>()) {
                Some(x) if x.len() == 2 && x.iter().all(Option::is_some) => Ok((x[0].unwrap(), x[1].unwrap())),
                _ => err(format!("{}[{i}]", self.path(key)), "expected a [b1, b2] pair of numbers"),
            })
            .collect()
    }

    fn finish(self, warnings: &mut Vec<String>) {
        if let Some(t) = self.table {
            for key in t.keys() {
                if !self.used.contains(key.as_str()) {
                    warnings.push(format!("unknown key {}.{key} ignored", self.name));
                }
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn positive(path: String, x: f64) -> Result<f64, ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        err(path, format!("must be positive, got {x}"))
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::GlobalMin => "global_min",
        Mode::LocalMin => "local_min",
        Mode::MountainPass => "mountain_pass",
        Mode::RayleighQuotientA => "rayleigh_quotient_A",
    }
}

fn mode_from(s: &str) -> Option<Mode> {
    [Mode::GlobalMin, Mode::LocalMin, Mode::MountainPass, Mode::RayleighQuotientA]
        .into_iter()
        .find(|m| mode_name(*m) == s)
}

/// Mode used when `[solve]` names none.
pub fn default_mode(experiment: Experiment, dim: Option<usize>) -> Mode {
    match (experiment, dim) {
        (Experiment::Bubble | Experiment::Betalimit, _) => Mode::MountainPass,
        (_, Some(3)) => Mode::LocalMin,
        (_, Some(4)) => Mode::MountainPass,
        _ => Mode::GlobalMin,
    }
}

fn support_name(s: Support) -> &'static str {
    match s {
        Support::Both => "both",
        Support::FirstOnly => "first_only",
        Support::SecondOnly => "second_only",
    }
}

/// Parses a configuration. `fallback` supplies the experiment when the
/// document has no `experiment.kind`; a conflicting kind is an error.
pub fn parse_config(text: &str, fallback: Option<Experiment>) -> Result<Parsed, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        path: "<document>".into(),
        message: e.message().to_string(),
    })?;
    let mut warnings = Vec::new();
    for key in root.keys() {
        if !["problem", "grid", "solve", "experiment", "ladder"].contains(&key.as_str()) {
            warnings.push(format!("unknown section {key} ignored"));
        }
    }

    let mut ex = Section::new(&root, "experiment")?;
    let experiment = match (ex.string("kind")?, fallback) {
        (Some(k), f) => {
            let Some(e) = Experiment::from_name(k) else {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                return err("experiment.kind", format!("unknown experiment {k:?}, expected one of {}", names.join(", ")));
            };
            if f.is_some_and(|f| f != e) {
                return err("experiment.kind", format!("config is for {k}, not {}", f.unwrap().name()));
            }
            e
        }
        (None, Some(f)) => f,
        (None, None) => return err("experiment.kind", "missing (expected an experiment name)"),
    };

    let mut pr = Section::new(&root, "problem")?;
    let problem = if pr.present() {
        let dim = match pr.uint("N")? {
            Some(n @ 1..=4) => n as usize,
            Some(n) => return err("problem.N", format!("must be 1, 2, 3 or 4, got {n}")),
            None => return err("problem.N", "missing (expected an integer 1..=4)"),
        };
        let mut nonneg = |key: &'static str| -> Result<f64, ConfigError> {
            let x = pr.req_f64(key)?;
            if !(x >= 0.0 && x.is_finite()) {
                return err(format!("problem.{key}"), format!("must be nonnegative, got {x}"));
            }
            Ok(x)
        };
        let (mu1, mu2, rho) = (nonneg("mu1")?, nonneg("mu2")?, nonneg("rho")?);
        let beta = pr.req_f64("beta")?;
        if !beta.is_finite() {
            return err("problem.beta", "must be finite");
        }
        let b1 = positive("problem.b1".into(), pr.req_f64("b1")?)?;
        let b2 = positive("problem.b2".into(), pr.req_f64("b2")?)?;
        Some(Params { dim, mu1, mu2, rho, beta, b1, b2 })
    } else {
        None
    };
    if problem.is_none() && experiment.needs_problem() {
        return err("problem", format!("section required for {}", experiment.name()));
    }

    let mut gr = Section::new(&root, "grid")?;
    let grid_dim = match gr.uint("N")? {
        None => None,
        Some(n @ 1..=4) => Some(n as usize),
        Some(n) => return err("grid.N", format!("must be 1, 2, 3 or 4, got {n}")),
    };
    if let (Some(g), Some(p)) = (grid_dim, problem) {
        if g != p.dim {
            return err("grid.N", format!("{g} disagrees with problem.N = {}", p.dim));
        }
    }
    let mut grid = GridSpec::default();
    if let Some(n) = gr.uint("n")? {
        if n < 64 {
            return err("grid.n", format!("at least 64 nodes, got {n}"));
        }
        grid.n = n as usize;
    }
    grid.r_max = gr.f64("r_max")?.map(|r| positive("grid.r_max".into(), r)).transpose()?;
    let stretch = gr.f64("stretch")?;
    grid.spacing = match gr.string("spacing")? {
        None | Some("graded") => match stretch {
            Some(s) => Spacing::Graded { stretch: positive("grid.stretch".into(), s)? },
            None => grid.spacing,
        },
        Some("uniform") => {
            if stretch.is_some() {
                return err("grid.stretch", "only meaningful with spacing = \"graded\"");
            }
            Spacing::Uniform
        }
        Some(other) => return err("grid.spacing", format!("expected \"uniform\" or \"graded\", got {other:?}")),
    };
    let dim = grid_dim.or(problem.map(|p| p.dim));

    let mut so = Section::new(&root, "solve")?;
    let mode = match so.string("mode")? {
        None => default_mode(experiment, dim),
        Some(s) => mode_from(s).ok_or_else(|| ConfigError {
            path: "solve.mode".into(),
            message: format!("expected global_min, local_min, mountain_pass or rayleigh_quotient_A, got {s:?}"),
        })?,
    };
    let mut solve = SolveConfig::new(mode);
    solve.grid = grid;
    if let Some(x) = so.f64("step")? {
        solve.step = positive("solve.step".into(), x)?;
    }
    solve.tol_grad = so.f64("tol_grad")?.map(|x| positive("solve.tol_grad".into(), x)).transpose()?;
    if let Some(x) = so.f64("tol_pohozaev")? {
        solve.tol_pohozaev = positive("solve.tol_pohozaev".into(), x)?;
    }
    if let Some(n) = so.uint("max_iters")? {
        if n == 0 {
            return err("solve.max_iters", "must be at least 1");
        }
        solve.max_iters = n as usize;
    }
    solve.seed = so.uint("seed")?.unwrap_or(0);
    solve.ball_radius = so.f64("ball_radius")?.map(|x| positive("solve.ball_radius".into(), x)).transpose()?;
    solve.support = match so.string("support")? {
        None | Some("both") => Support::Both,
        Some("first_only") => Support::FirstOnly,
        Some("second_only") => Support::SecondOnly,
        Some(s) => return err("solve.support", format!("expected both, first_only or second_only, got {s:?}")),
    };

    let d = ExperimentSettings::default();
    let settings = ExperimentSettings {
        dt: ex.f64("dt")?.map_or(Ok(d.dt), |x| positive("experiment.dt".into(), x))?,
        t_end: ex.f64("t_end")?.map_or(Ok(d.t_end), |x| positive("experiment.t_end".into(), x))?,
        amplitude: ex.f64("amplitude")?.map_or(Ok(d.amplitude), |x| positive("experiment.amplitude".into(), x))?,
        perturbations: ex.uint("perturbations")?.map_or(d.perturbations, |n| n as usize),
        power: match ex.uint("power")? {
            None => d.power,
            Some(p @ 2..=16) => p as u32,
            Some(p) => return err("experiment.power", format!("expected an integer in 2..=16, got {p}")),
        },
        cutoff_n: match ex.uint("cutoff_n")? {
            None => d.cutoff_n,
            Some(n) if n >= 64 => n as usize,
            Some(n) => return err("experiment.cutoff_n", format!("at least 64 nodes, got {n}")),
        },
        refine: ex.bool("refine")?.unwrap_or(d.refine),
        results_dir: ex.string("results_dir")?.map(PathBuf::from),
    };
    let output_dir = PathBuf::from(ex.string("output_dir")?.unwrap_or("normsolve-out"));

    let mut la = Section::new(&root, "ladder")?;
    let ladder = Ladder { masses: la.pairs("masses")?, betas: la.numbers("betas")?, eps: la.numbers("eps")? };
    for (i, &(b1, b2)) in ladder.masses.iter().enumerate() {
        positive(format!("ladder.masses[{i}]"), b1.min(b2))?;
    }
    for (key, xs) in [("betas", &ladder.betas), ("eps", &ladder.eps)] {
        for (i, &x) in xs.iter().enumerate() {
            positive(format!("ladder.{key}[{i}]"), x)?;
        }
    }
    let required = match experiment {
        Experiment::Collapse | Experiment::Bubble => Some(("masses", ladder.masses.len())),
        Experiment::Betalimit => Some(("betas", ladder.betas.len())),
        Experiment::Cutoff => Some(("eps", ladder.eps.len())),
        _ => None,
    };
    if let Some((key, len)) = required {
        if len < 2 {
            return err(format!("ladder.{key}"), format!("{} needs at least two points, got {len}", experiment.name()));
        }
    }
    if experiment == Experiment::Profile && dim.is_none() {
        return err("grid.N", "profile needs a dimension (grid.N or problem.N)");
    }

    for s in [ex, pr, gr, so, la] {
        s.finish(&mut warnings);
    }
    Ok(Parsed {
        config: RunConfig {
            experiment,
            problem,
            dim: grid_dim,
            solve,
            settings,
            output_dir,
            ladder: (!ladder.is_empty()).then_some(ladder),
        },
        warnings,
    })
}

/// Canonical TOML text; `parse_config(&print_config(c), None)` gives `c` back.
pub fn print_config(c: &RunConfig) -> String {
    let mut root = Table::new();
    let mut ex = Table::new();
    let s = &c.settings;
    ex.insert("kind".into(), c.experiment.name().into());
    ex.insert("output_dir".into(), c.output_dir.to_string_lossy().into_owned().into());
    ex.insert("dt".into(), s.dt.into());
    ex.insert("t_end".into(), s.t_end.into());
    ex.insert("amplitude".into(), s.amplitude.into());
    ex.insert("perturbations".into(), (s.perturbations as i64).into());
    ex.insert("power".into(), (s.power as i64).into());
    ex.insert("cutoff_n".into(), (s.cutoff_n as i64).into());
    ex.insert("refine".into(), s.refine.into());
    if let Some(r) = &s.results_dir {
        ex.insert("results_dir".into(), r.to_string_lossy().into_owned().into());
    }
    root.insert("experiment".into(), ex.into());

    if let Some(p) = c.problem {
        let mut t = Table::new();
        t.insert("N".into(), (p.dim as i64).into());
        for (k, v) in [("mu1", p.mu1), ("mu2", p.mu2), ("rho", p.rho), ("beta", p.beta), ("b1", p.b1), ("b2", p.b2)] {
            t.insert(k.into(), v.into());
        }
        root.insert("problem".into(), t.into());
    }

    let mut g = Table::new();
    if let Some(n) = c.dim {
        g.insert("N".into(), (n as i64).into());
    }
    g.insert("n".into(), (c.solve.grid.n as i64).into());
    if let Some(r) = c.solve.grid.r_max {
        g.insert("r_max".into(), r.into());
    }
    match c.solve.grid.spacing {
        Spacing::Uniform => {
            g.insert("spacing".into(), "uniform".into());
        }
        Spacing::Graded { stretch } => {
            g.insert("spacing".into(), "graded".into());
            g.insert("stretch".into(), stretch.into());
        }
    }
    root.insert("grid".into(), g.into());

    let so = &c.solve;
    let mut t = Table::new();
    t.insert("mode".into(), mode_name(so.mode).into());
    t.insert("step".into(), so.step.into());
    if let Some(x) = so.tol_grad {
        t.insert("tol_grad".into(), x.into());
    }
    t.insert("tol_pohozaev".into(), so.tol_pohozaev.into());
    t.insert("max_iters".into(), (so.max_iters as i64).into());
    t.insert("seed".into(), (so.seed as i64).into());
    if let Some(x) = so.ball_radius {
        t.insert("ball_radius".into(), x.into());
    }
    t.insert("support".into(), support_name(so.support).into());
    root.insert("solve".into(), t.into());

    if let Some(l) = &c.ladder {
        let mut t = Table::new();
        if !l.masses.is_empty() {
            let pairs: Vec<Value> = l.masses.iter().map(|&(a, b)| Value::Array(vec![a.into(), b.into()])).collect();
            t.insert("masses".into(), pairs.into());
        }
        if !l.betas.is_empty() {
            t.insert("betas".into(), l.betas.clone().into());
        }
        if !l.eps.is_empty() {
            t.insert("eps".into(), l.eps.clone().into());
        }
        root.insert("ladder".into(), t.into());
    }
    toml::to_string(&root).expect("tables of plain values")
}
