//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! scenario.seed = 42
//! experiment.mode = local+correlated
//! compare.specs = sarima, self
//! spec.sarima.model = sarima
//! ```
//!
//! Every key must be known; values are validated when the file is loaded.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::panel::{FillPolicy, MAX_INTERPOLATED_GAP};
use crate::error::{Error, Result};
use crate::pipeline::{ExperimentSpec, MemberSource};
use crate::synth::ScenarioConfig;

/// Where `run`, `compare` and `trace` get their panel from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Scenario,
    Csv { path: PathBuf, fill: FillPolicy },
}

/// Day-window selection for forecast traces, relative to the first scored
/// test label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceSpec {
    pub start: usize,
    pub length: usize,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            start: 0,
            length: 288,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub data: DataSource,
    /// The single experiment run by `run`; also the base for compare specs.
    pub experiment: ExperimentSpec,
    /// Experiments for `compare` and `trace`, in listed order.
    pub compare: Vec<ExperimentSpec>,
    pub trace: TraceSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            data: DataSource::Scenario,
            experiment: ExperimentSpec::default(),
            compare: Vec::new(),
            trace: TraceSpec::default(),
        }
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Entries(BTreeMap<String, Entry>);

fn invalid(line: usize, key: &str, msg: impl Display) -> Error {
    Error::InvalidConfig(format!("line {line}: `{key}`: {msg}"))
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {line}: expected `key = value`"))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::InvalidConfig(format!("line {line}: empty key")));
            }
            if let Some(prev) = map.get(&key) {
                let prev: &Entry = prev;
                return Err(invalid(
                    line,
                    &key,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
            map.insert(
                key,
                Entry {
                    line,
                    value: value.trim().to_string(),
                    used: false,
                },
            );
        }
        Ok(Self(map))
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| invalid(line, key, e)),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v).map(Some).map_err(|e| invalid(line, key, e)),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }

    fn unused(&self) -> Option<(&String, usize)> {
        self.0
            .iter()
            .find(|(_, e)| !e.used)
            .map(|(k, e)| (k, e.line))
    }
}

fn triple(entries: &mut Entries, key: &str) -> Result<Option<[usize; 3]>> {
    match entries.list::<usize>(key)? {
        None => Ok(None),
        Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
        Some(v) => Err(invalid(
            entries.line(key),
            key,
            format!("expected 3 integers, got {}", v.len()),
        )),
    }
}

fn apply_scenario(e: &mut Entries, s: &mut ScenarioConfig) -> Result<()> {
    e.set("scenario.n_zones", &mut s.n_zones)?;
    e.set("scenario.months", &mut s.months)?;
    e.set("scenario.step_seconds", &mut s.step_seconds)?;
    e.set("scenario.nonlinearity", &mut s.nonlinearity)?;
    e.set("scenario.seed", &mut s.seed)?;
    if let Some(v) = e.list("scenario.noise_sigma")? {
        s.noise_sigma = v;
    }
    if let Some(v) = e.list("scenario.base_scale")? {
        s.base_scale = v;
    }
    if let Some((line, v)) = e.raw("scenario.latent_weights") {
        // rows separated by `;`, entries by `,`
        s.latent_weights = v
            .split(';')
            .map(parse_list::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|m| invalid(line, "scenario.latent_weights", m))?;
    }
    s.validate()
}

fn key(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Applies `<prefix>.<field>` selection keys (target, mode, members...).
fn apply_selection(e: &mut Entries, prefix: &str, spec: &mut ExperimentSpec) -> Result<()> {
    let k = |f: &str| key(prefix, f);
    e.set(&k("name"), &mut spec.name)?;
    e.set(&k("target"), &mut spec.target)?;
    e.set(&k("mode"), &mut spec.mode)?;
    e.set(&k("model"), &mut spec.model)?;
    if let Some(seeds) = e.list(&k("seeds"))? {
        spec.seeds = seeds;
    }
    let members: Option<Vec<String>> = e.list(&k("members"))?;
    let theta: Option<f64> = e.get(&k("theta"))?;
    match (members, theta) {
        (Some(_), Some(_)) => {
            return Err(invalid(
                e.line(&k("theta")),
                &k("theta"),
                "give either members or theta, not both",
            ));
        }
        (Some(m), None) => spec.members = MemberSource::Explicit(m),
        (None, Some(t)) => spec.members = MemberSource::Derived { theta: t },
        (None, None) => {}
    }
    Ok(())
}

/// Applies `[<prefix>.]net.*`, `sarima.*` and `split.*` keys.
fn apply_model(e: &mut Entries, prefix: &str, spec: &mut ExperimentSpec) -> Result<()> {
    let k = |f: &str| key(prefix, f);
    let n = &mut spec.net;
    e.set(&k("net.window"), &mut n.window)?;
    e.set(&k("net.filters"), &mut n.filters)?;
    e.set(&k("net.kernel"), &mut n.kernel)?;
    e.set(&k("net.cell"), &mut n.cell)?;
    e.set(&k("net.hidden"), &mut n.hidden)?;
    e.set(&k("net.dense_hidden"), &mut n.dense_hidden)?;
    e.set(&k("net.dropout_rate"), &mut n.dropout_rate)?;
    e.set(&k("net.l2_lambda"), &mut n.l2_lambda)?;
    e.set(&k("net.learning_rate"), &mut n.learning_rate)?;
    e.set(&k("net.epochs"), &mut n.epochs)?;
    e.set(&k("net.batch_size"), &mut n.batch_size)?;
    e.set(&k("net.patience"), &mut n.patience)?;
    e.set(&k("net.clip_norm"), &mut n.clip_norm)?;

    let s = &mut spec.sarima;
    if let Some([p, d, q]) = triple(e, &k("sarima.order"))? {
        (s.p, s.d, s.q) = (p, d, q);
    }
    if let Some([p, d, q]) = triple(e, &k("sarima.seasonal"))? {
        (s.seasonal_p, s.seasonal_d, s.seasonal_q) = (p, d, q);
    }
    e.set(&k("sarima.period"), &mut s.period)?;
    e.set(&k("sarima.include_mean"), &mut s.include_mean)?;

    e.set(&k("split.train_months"), &mut spec.split.train_months)?;
    e.set(&k("split.val_months"), &mut spec.split.val_months)?;
    e.set(&k("split.test_months"), &mut spec.split.test_months)?;
    Ok(())
}

impl RunConfig {
    /// Parses configuration text; relative data paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let mut cfg = RunConfig::default();
        apply_scenario(&mut e, &mut cfg.scenario)?;

        let mut base = ExperimentSpec::default();
        apply_selection(&mut e, "experiment", &mut base)?;
        apply_model(&mut e, "", &mut base)?;
        base.validate()?;

        if let Some(path) = e.get::<String>("data.panel")? {
            let mut fill = e.get::<FillPolicy>("data.fill")?.unwrap_or_default();
            if let Some(g) = e.get::<usize>("data.max_gap")? {
                match &mut fill {
                    FillPolicy::LinearInterpolate { max_gap } => *max_gap = g,
                    FillPolicy::Error if g == 0 => {}
                    FillPolicy::Error => {
                        return Err(invalid(
                            e.line("data.max_gap"),
                            "data.max_gap",
                            format!("gaps need data.fill = linear_interpolate (at most {MAX_INTERPOLATED_GAP})"),
                        ))
                    }
                }
            }
            fill.validate()?;
            cfg.data = DataSource::Csv {
                path: base_dir.join(path),
                fill,
            };
        } else if e.line("data.fill") > 0 || e.line("data.max_gap") > 0 {
            return Err(Error::InvalidConfig(
                "data.fill and data.max_gap need data.panel".into(),
            ));
        }

        if let Some(names) = e.list::<String>("compare.specs")? {
            for name in names {
                if cfg.compare.iter().any(|s| s.name == name) {
                    return Err(Error::InvalidConfig(format!(
                        "compare.specs lists `{name}` twice"
                    )));
                }
                let mut spec = ExperimentSpec {
                    name: name.clone(),
                    ..base.clone()
                };
                let prefix = format!("spec.{name}");
                apply_selection(&mut e, &prefix, &mut spec)?;
                apply_model(&mut e, &prefix, &mut spec)?;
                spec.name = name;
                spec.validate()?;
                cfg.compare.push(spec);
            }
        }

        e.set("trace.start", &mut cfg.trace.start)?;
        e.set("trace.length", &mut cfg.trace.length)?;
        if cfg.trace.length == 0 {
            return Err(Error::InvalidConfig("trace.length must be positive".into()));
        }

        if let Some((key, line)) = e.unused() {
            return Err(invalid(line, key, "unknown key"));
        }
        cfg.experiment = base;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, dir)
    }

    /// Experiments for `compare`/`trace`: the listed specs, or the single
    /// experiment when none are listed.
    pub fn comparison_specs(&self) -> Vec<ExperimentSpec> {
        if self.compare.is_empty() {
            vec![self.experiment.clone()]
        } else {
            self.compare.clone()
        }
    }

    /// Replaces every experiment's seed list with `[seed]`.
    pub fn override_seed(&mut self, seed: u64) {
        self.experiment.seeds = vec![seed];
        for s in &mut self.compare {
            s.seeds = vec![seed];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::CellKind;
    use crate::pipeline::ModelKind;
    use crate::series::ForecastMode;
    use crate::synth::Nonlinearity;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn reads_all_sections() {
        let cfg = parse(
            "scenario.seed = 7\n\
             scenario.nonlinearity = none # inline comment\n\
             scenario.n_zones = 2\n\
             scenario.latent_weights = 1,0 ; 0.5,0.5\n\
             scenario.noise_sigma = 1, 2\n\
             scenario.base_scale = 10, 20\n\
             net.epochs = 3\n\
             net.cell = gru\n\
             sarima.order = 2,0,0\n\
             split.test_months = 0.5\n\
             experiment.target = 2\n\
             experiment.mode = correlated\n\
             experiment.members = 1\n\
             experiment.seeds = 3, 4\n\
             data.panel = panel.csv\n\
             data.fill = linear_interpolate\n\
             data.max_gap = 2\n\
             trace.length = 100\n",
        )
        .unwrap();
        assert_eq!(cfg.scenario.seed, 7);
        assert_eq!(cfg.scenario.nonlinearity, Nonlinearity::None);
        assert_eq!(
            cfg.scenario.latent_weights,
            vec![vec![1.0, 0.0], vec![0.5, 0.5]]
        );
        let x = &cfg.experiment;
        assert_eq!(x.net.epochs, 3);
        assert_eq!(x.net.cell, CellKind::Gru);
        assert_eq!((x.sarima.p, x.sarima.q), (2, 0));
        assert_eq!(x.split.test_months, 0.5);
        assert_eq!(x.mode, ForecastMode::Correlated);
        assert_eq!(x.members, MemberSource::Explicit(vec!["1".into()]));
        assert_eq!(x.seeds, vec![3, 4]);
        assert_eq!(
            cfg.data,
            DataSource::Csv {
                path: PathBuf::from("/cfg/panel.csv"),
                fill: FillPolicy::LinearInterpolate { max_gap: 2 }
            }
        );
        assert_eq!(cfg.trace.length, 100);
    }

    #[test]
    fn compare_specs_inherit_and_override() {
        let cfg = parse(
            "net.epochs = 4\n\
             compare.specs = arima, both\n\
             spec.arima.model = sarima\n\
             spec.both.mode = local+correlated\n\
             spec.both.theta = 0.9\n\
             spec.both.net.epochs = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.compare.len(), 2);
        assert_eq!(cfg.compare[0].name, "arima");
        assert_eq!(cfg.compare[0].model, ModelKind::Sarima);
        assert_eq!(cfg.compare[0].net.epochs, 4);
        assert_eq!(cfg.compare[1].members, MemberSource::Derived { theta: 0.9 });
        assert_eq!(cfg.compare[1].net.epochs, 6);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "bogus.key = 1\n",
            "net.epochs = many\n",
            "net.epochs = 0\n",
            "net.epochs = 1\nnet.epochs = 2\n",
            "no equals sign\n",
            "experiment.theta = 1.5\n",
            "experiment.theta = 0.9\nexperiment.members = 1\n",
            "experiment.model = sarima\nexperiment.mode = correlated\n",
            "spec.x.mode = local\n",
            "data.fill = linear_interpolate\n",
            "data.panel = p.csv\ndata.max_gap = 2\n",
            "data.panel = p.csv\ndata.fill = linear_interpolate\ndata.max_gap = 9\n",
            "scenario.noise_sigma = 1\n",
            "sarima.order = 1,0\n",
        ] {
            assert!(
                matches!(parse(text), Err(Error::InvalidConfig(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn seed_override_applies_everywhere() {
        let mut cfg = parse("compare.specs = a, b\n").unwrap();
        cfg.override_seed(9);
        assert_eq!(cfg.experiment.seeds, vec![9]);
        assert!(cfg.compare.iter().all(|s| s.seeds == vec![9]));
    }
}
