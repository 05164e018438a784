//! TOML run configuration. Every section is optional and is layered over the
//! benchmark defaults of the chosen case, mode and preset.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::benchmarks::{Case, CaseConfig, Mode, Preset};
use crate::contact::KktMethod;
use crate::error::{Error, Result};

/// JSON schema of the configuration document.
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSection {
    young: Option<f64>,
    poisson: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSection {
    pressure: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    hidden: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct InverseSection {
    initial_guess: Option<f64>,
}

/// Parsed configuration document, before defaults are applied.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: Case,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    #[serde(default)]
    pub log_level: Option<String>,
    #[serde(default)]
    profile_samples: Option<usize>,
    #[serde(default)]
    material: Option<MaterialSection>,
    #[serde(default)]
    load: Option<LoadSection>,
    #[serde(default)]
    network: Option<NetworkSection>,
    #[serde(default)]
    data: Option<DataSection>,
    #[serde(default)]
    inverse: Option<InverseSection>,
    #[serde(default)]
    geometry: Option<Table>,
    #[serde(default)]
    kkt: Option<Table>,
    #[serde(default)]
    weights: Option<Table>,
    #[serde(default)]
    adam: Option<Table>,
    #[serde(default)]
    lbfgs: Option<Table>,
    #[serde(default)]
    points: Option<Table>,
    #[serde(default)]
    surrogate: Option<Table>,
}

/// Command-line values that take precedence over the document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a document; a relative `data.path` is resolved against the
    /// document's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(data), Some(dir)) = (cfg.data.as_mut(), path.parent()) {
            if data.path.is_relative() {
                data.path = dir.join(&data.path);
            }
        }
        Ok(cfg)
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Forward)
    }

    pub fn data_path(&self) -> Option<&Path> {
        self.data.as_ref().map(|d| d.path.as_path())
    }

    pub fn output_dir(&self, overrides: &Overrides) -> PathBuf {
        overrides
            .out
            .clone()
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Resolved and validated case configuration.
    pub fn resolve(&self, overrides: &Overrides) -> Result<CaseConfig> {
        let mode = self.mode();
        let preset = overrides.preset.or(self.preset).unwrap_or(Preset::Desk);
        let mut cfg = CaseConfig::defaults(self.case, mode, preset);
        if let Some(seed) = overrides.seed.or(self.seed) {
            cfg.seed = seed;
        }
        if let Some(m) = &self.material {
            cfg.young = m.young.unwrap_or(cfg.young);
            cfg.poisson = m.poisson.unwrap_or(cfg.poisson);
        }
        if let Some(p) = self.load.as_ref().and_then(|l| l.pressure) {
            cfg.pressure = p;
        }
        if let Some(h) = self.network.as_ref().and_then(|n| n.hidden.clone()) {
            cfg.hidden = h;
        }
        if let Some(g) = self.inverse.as_ref().and_then(|i| i.initial_guess) {
            cfg.initial_guess = g;
        }
        if let Some(n) = self.profile_samples {
            cfg.profile_samples = n;
        }
        overlay_into(&mut cfg.geometry, self.geometry.as_ref(), "geometry")?;
        overlay_into(&mut cfg.weights, self.weights.as_ref(), "weights")?;
        overlay_into(&mut cfg.adam, self.adam.as_ref(), "adam")?;
        overlay_into(&mut cfg.lbfgs, self.lbfgs.as_ref(), "lbfgs")?;
        overlay_into(&mut cfg.points, self.points.as_ref(), "points")?;
        overlay_into(&mut cfg.surrogate, self.surrogate.as_ref(), "surrogate")?;
        if let Some(table) = &self.kkt {
            cfg.kkt = resolve_kkt(&cfg, table)?;
        }
        let needs_data = matches!(mode, Mode::DataEnhanced | Mode::Inverse);
        if needs_data && self.data.is_none() {
            return Err(Error::Config("data.path is required in data_enhanced and inverse modes".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The KKT table may switch method; a new method starts from its default
/// parameters at the case's weight scale.
fn resolve_kkt(cfg: &CaseConfig, table: &Table) -> Result<KktMethod> {
    let base = match table.get("method") {
        Some(Value::String(name)) => {
            let wanted = KktMethod::from_name(name)?;
            if wanted.name() == cfg.kkt.name() {
                cfg.kkt
            } else {
                wanted.scaled(default_kkt_scale(cfg))
            }
        }
        Some(_) => return Err(Error::Config("kkt.method must be a string".into())),
        None => cfg.kkt,
    };
    let mut user = table.clone();
    if let Some(Value::String(name)) = user.get_mut("method") {
        *name = base_tag(&base).to_string();
    }
    overlay(&base, Some(&user), "kkt")
}

fn base_tag(m: &KktMethod) -> &'static str {
    match m {
        KktMethod::Sign { .. } => "sign",
        KktMethod::Sigmoid { .. } => "sigmoid",
        KktMethod::FischerBurmeister { .. } => "fischer_burmeister",
    }
}

fn default_kkt_scale(cfg: &CaseConfig) -> f64 {
    match cfg.kkt {
        KktMethod::Sign { weights } | KktMethod::Sigmoid { weights, .. } => weights[0],
        KktMethod::FischerBurmeister { weight } => weight,
    }
}

fn overlay_into<T: Serialize + DeserializeOwned>(target: &mut T, user: Option<&Table>, section: &str) -> Result<()> {
    if user.is_some() {
        *target = overlay(target, user, section)?;
    }
    Ok(())
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, user: Option<&Table>, section: &str) -> Result<T> {
    let mut value = Value::try_from(base).map_err(|e| Error::Config(format!("[{section}]: {e}")))?;
    if let (Value::Table(b), Some(u)) = (&mut value, user) {
        merge(b, u);
    }
    value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[{section}]: {}", e.message())))
}

fn merge(base: &mut Table, user: &Table) {
    for (k, v) in user {
        match (base.get_mut(k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<CaseConfig> {
        RunConfig::from_toml(text)?.resolve(&Overrides::default())
    }

    #[test]
    fn minimal_document_gives_defaults() {
        let cfg = resolve("case = \"lame\"").unwrap();
        assert_eq!(cfg, CaseConfig::defaults(Case::Lame, Mode::Forward, Preset::Desk));
    }

    #[test]
    fn partial_section_keeps_preset_values() {
        let cfg = resolve("case = \"block\"\n[lbfgs]\nhistory = 20\n").unwrap();
        assert_eq!(cfg.lbfgs.history, 20);
        assert_eq!(cfg.lbfgs.max_iters, 3000);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = resolve("case = \"lame\"\n[adam]\nlearning_rate = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = resolve("case = \"lame\"\ncolour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = resolve("case = \"lame\"\nseed = = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn incompressible_material_is_rejected() {
        let err = resolve("case = \"lame\"\n[material]\npoisson = 0.5\n").unwrap_err();
        assert!(matches!(err, Error::InvalidMaterial(_)), "{err}");
    }

    #[test]
    fn kkt_switch_keeps_case_scale() {
        let cfg = resolve("case = \"hertz\"\n[kkt]\nmethod = \"sigmoid\"\ndelta_g = 20.0\n").unwrap();
        assert_eq!(
            cfg.kkt,
            KktMethod::Sigmoid {
                delta_g: 20.0,
                delta_p: 100.0,
                weights: [1e3; 3]
            }
        );
        let cfg = resolve("case = \"block\"\n[kkt]\nweight = 5.0\n").unwrap();
        assert_eq!(cfg.kkt, KktMethod::FischerBurmeister { weight: 5.0 });
    }

    #[test]
    fn overrides_take_precedence() {
        let rc = RunConfig::from_toml("case = \"lame\"\nseed = 3\npreset = \"full\"\n").unwrap();
        let o = Overrides {
            seed: Some(9),
            preset: Some(Preset::Desk),
            out: None,
        };
        let cfg = rc.resolve(&o).unwrap();
        assert_eq!((cfg.seed, cfg.preset), (9, Preset::Desk));
        assert_eq!(rc.resolve(&Overrides::default()).unwrap().hidden, vec![50; 3]);
    }

    #[test]
    fn inverse_requires_data_path() {
        assert!(resolve("case = \"hertz\"\nmode = \"inverse\"\n").is_err());
        let cfg = resolve("case = \"hertz\"\nmode = \"inverse\"\n[data]\npath = \"d.csv\"\n[inverse]\ninitial_guess = 2.0\n").unwrap();
        assert_eq!(cfg.initial_guess, 2.0);
    }

    #[test]
    fn schema_lists_every_top_level_key() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        let props = schema["properties"].as_object().unwrap();
        for key in [
            "case", "mode", "preset", "seed", "out", "log_level", "profile_samples", "material", "load",
            "network", "data", "inverse", "geometry", "kkt", "weights", "adam", "lbfgs", "points", "surrogate",
        ] {
            assert!(props.contains_key(key), "{key}");
        }
        assert_eq!(props.len(), 19);
        assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
    }
}
