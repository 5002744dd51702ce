//! Experiment configuration files.
//!
//! A configuration is a JSON document with a `schema_version` field and no
//! unknown keys anywhere; the published schema lives in
//! `schema/experiment.schema.json`. Parsing reports the JSON pointer of the
//! offending key, and for a missing key the pointer names the key itself
//! (`/sim/dt`), not its parent object.

use rankflow::model::{DiffusionField, DriftField, GapVector, Window};
use rankflow::rates::{sigma_region, LimitOptions, WindowStrategy};
use rankflow::simulate::{AdaptiveOptions, GapSource, RateLaw, SimConfig, TwoSidedInit};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub drift: FieldSpec,
    #[serde(default = "FieldSpec::unit")]
    pub diffusion: FieldSpec,
    /// Required by the simulating subcommands only.
    #[serde(default)]
    pub engine: Option<EngineSpec>,
    /// Required by the simulating subcommands only.
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub rates: RatesSpec,
    #[serde(default)]
    pub tests: TestSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A rank-indexed coefficient sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `values[i]` at rank `first + i`, end values continued as tails.
    List {
        first: i64,
        values: Vec<f64>,
    },
    /// Core values on `[n_minus, n_plus]`, `lower` below and `upper` above.
    Tailed {
        n_minus: i64,
        n_plus: i64,
        core: Vec<f64>,
        lower: f64,
        upper: f64,
    },
    /// One of the built-in drift sequences (see [`example_drift`]).
    Example {
        id: u8,
    },
}

impl FieldSpec {
    pub fn unit() -> Self {
        FieldSpec::Constant { value: 1.0 }
    }

    pub fn drift(&self) -> Result<DriftField, CliError> {
        Ok(match self {
            FieldSpec::Constant { value } => DriftField::constant(*value),
            FieldSpec::List { first, values } => DriftField::from_slice(*first, values)?,
            FieldSpec::Tailed {
                n_minus,
                n_plus,
                core,
                lower,
                upper,
            } => DriftField::new(*n_minus, *n_plus, core.clone(), *lower, *upper)?,
            FieldSpec::Example { id } => example_drift(*id)?,
        })
    }

    pub fn diffusion(&self) -> Result<DiffusionField, CliError> {
        Ok(match self {
            FieldSpec::Constant { value } => DiffusionField::new(0, 0, vec![*value], *value, *value)?,
            FieldSpec::List { first, values } => {
                let (lo, hi) = match (values.first(), values.last()) {
                    (Some(a), Some(b)) => (*a, *b),
                    _ => return Err(CliError::Precondition("empty diffusion list".into())),
                };
                DiffusionField::new(*first, first + values.len() as i64 - 1, values.clone(), lo, hi)?
            }
            FieldSpec::Tailed {
                n_minus,
                n_plus,
                core,
                lower,
                upper,
            } => DiffusionField::new(*n_minus, *n_plus, core.clone(), *lower, *upper)?,
            FieldSpec::Example { .. } => {
                return Err(CliError::Precondition(
                    "built-in examples define drifts only; use a constant diffusion".into(),
                ))
            }
        })
    }
}

/// Built-in drift sequences.
///
/// 1. `g ≡ 0`;
/// 2. `g_n = 2^{-|n|}` on `|n| ≤ 40`, zero outside (summable);
/// 3. `g_n = 1` for `n ≥ 1`, `0` otherwise;
/// 4. `g_n = 1` for `n ≤ 0`, `0` otherwise;
/// 5. `g_n = 2^{n-1}` for `-60 ≤ n ≤ 0`, zero otherwise (sums to 1 up to 2^-61);
/// 6. same sequence as 4 (used with symmetric windows).
pub fn example_drift(id: u8) -> Result<DriftField, CliError> {
    let g = match id {
        1 => DriftField::constant(0.0),
        2 => {
            let core = (-40i64..=40).map(|n| 0.5f64.powi(n.abs() as i32)).collect();
            DriftField::new(-40, 40, core, 0.0, 0.0)?
        }
        3 => DriftField::new(0, 1, vec![0.0, 1.0], 0.0, 1.0)?,
        4 | 6 => DriftField::new(0, 1, vec![1.0, 0.0], 1.0, 0.0)?,
        5 => {
            let core = (-60i64..=0).map(|n| 2f64.powi(n as i32 - 1)).collect();
            DriftField::new(-60, 0, core, 0.0, 0.0)?
        }
        _ => {
            return Err(CliError::Precondition(format!(
                "unknown example drift {id}; expected 1..=6"
            )))
        }
    };
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSpec {
    /// Finite named system; particle `i + 1` starts at `x0[i]`, rank
    /// coefficients are read at ranks `1..=N`.
    Named { x0: Vec<f64> },
    /// Finite gap process on ranks `1..=N` with `N = z0.len() + 1`.
    Gap { z0: Vec<f64> },
    /// Two-sided system simulated on a core window with Brownian tails.
    TwoSided {
        core: Window,
        #[serde(default)]
        anchor: f64,
        start: StartSpec,
        #[serde(default = "default_activation_eps")]
        activation_eps: f64,
        #[serde(default = "default_max_absorptions")]
        max_absorptions: usize,
    },
}

fn default_activation_eps() -> f64 {
    AdaptiveOptions::default().activation_eps
}

fn default_max_absorptions() -> usize {
    AdaptiveOptions::default().max_absorptions
}

/// Initial gaps of a two-sided run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    /// Independent `Exp(λ_n)` gaps with `λ_n = 2Φ_{n+1}(g) + a + bn`.
    PiAb { a: f64, b: f64 },
    /// Independent `Exp(c1 + c2|n|)` gaps.
    Linear { c1: f64, c2: f64 },
    /// Deterministic gaps on the core window, `outer` elsewhere.
    Fixed { gaps: Vec<f64>, outer: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    /// Particle window whose gaps are reported by `rates`.
    #[serde(default = "default_rates_window")]
    pub window: Window,
    #[serde(default)]
    pub limit: LimitSpec,
}

impl Default for RatesSpec {
    fn default() -> Self {
        RatesSpec {
            a: 1.0,
            b: 0.0,
            window: default_rates_window(),
            limit: LimitSpec::default(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_rates_window() -> Window {
    Window { m: -3, n: 4 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    #[serde(default = "default_strategy")]
    pub strategy: WindowStrategy,
    #[serde(default = "default_limit_indices")]
    pub indices: Vec<i64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_divergence")]
    pub divergence: f64,
    #[serde(default = "default_j_max")]
    pub j_max: u64,
}

impl Default for LimitSpec {
    fn default() -> Self {
        LimitSpec {
            strategy: default_strategy(),
            indices: default_limit_indices(),
            tol: default_tol(),
            divergence: default_divergence(),
            j_max: default_j_max(),
        }
    }
}

impl LimitSpec {
    pub fn options(&self) -> LimitOptions {
        LimitOptions {
            tol: self.tol,
            divergence: self.divergence,
            j_max: self.j_max,
        }
    }
}

fn default_strategy() -> WindowStrategy {
    WindowStrategy::Symmetric
}

fn default_limit_indices() -> Vec<i64> {
    (-3..=3).collect()
}

fn default_tol() -> f64 {
    LimitOptions::default().tol
}

fn default_divergence() -> f64 {
    LimitOptions::default().divergence
}

fn default_j_max() -> u64 {
    LimitOptions::default().j_max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defaults to half the horizon.
    #[serde(default)]
    pub burn_in: Option<f64>,
    /// Gaps to test; defaults to every gap of a finite system and to
    /// `-1, 0, 1` for two-sided runs.
    #[serde(default)]
    pub indices: Option<Vec<i64>>,
    /// Keep every `thinning`-th recorded frame.
    #[serde(default = "one_u64")]
    pub thinning: u64,
    /// Defaults to `[horizon / 10, horizon]`.
    #[serde(default)]
    pub decay_times: Option<Vec<f64>>,
    #[serde(default)]
    pub decay_gap: i64,
    #[serde(default = "default_z")]
    pub z: f64,
    #[serde(default)]
    pub domination: Option<DominationSpec>,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            alpha: default_alpha(),
            burn_in: None,
            indices: None,
            thinning: 1,
            decay_times: None,
            decay_gap: 0,
            z: default_z(),
            domination: None,
        }
    }
}

fn default_alpha() -> f64 {
    rankflow::stats::DEFAULT_ALPHA
}

fn one_u64() -> u64 {
    1
}

fn default_z() -> f64 {
    3.0
}

/// Compares gap `gap` of the finite system on `wide` against the same gap
/// on `narrow` (`narrow ⊂ wide`), both in stationarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominationSpec {
    pub narrow: Window,
    pub wide: Window,
    pub gap: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Command-line values that replace configuration entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(sim) = &mut self.sim {
            if let Some(seed) = o.seed {
                sim.seed = seed;
            }
            if let Some(r) = o.replicas {
                sim.replicas = r;
            }
            if let Some(dt) = o.dt {
                sim.dt = dt;
            }
        }
        if let Some(out) = &o.out {
            self.output.dir = Some(out.clone());
        }
    }

    /// SHA-256 of the canonical serialization, lowercase hex.
    ///
    /// The output directory is left out: where artifacts land does not
    /// change what they contain.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config is serializable"))
    }

    /// Seed of the run; 0 when there is no simulation section.
    pub fn seed(&self) -> u64 {
        self.sim.map_or(0, |s| s.seed)
    }

    pub fn sim(&self) -> Result<SimConfig, CliError> {
        self.sim
            .ok_or_else(|| CliError::schema("/sim", "missing field `sim`"))
    }

    pub fn engine(&self) -> Result<&EngineSpec, CliError> {
        self.engine
            .as_ref()
            .ok_or_else(|| CliError::schema("/engine", "missing field `engine`"))
    }

    pub fn burn_in(&self) -> Result<f64, CliError> {
        Ok(match self.tests.burn_in {
            Some(b) => b,
            None => 0.5 * self.sim()?.horizon,
        })
    }

    /// Semantic checks that the schema cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        let g = self.drift.drift()?;
        self.diffusion.diffusion()?;
        check_window(&self.rates.window, "/rates/window")?;
        match &self.engine {
            Some(EngineSpec::Named { x0 }) if x0.len() < 2 => {
                return Err(CliError::Precondition("named engine needs at least two particles".into()))
            }
            Some(EngineSpec::Gap { z0 }) if z0.is_empty() => {
                return Err(CliError::Precondition("gap engine needs at least one gap".into()))
            }
            Some(EngineSpec::TwoSided { core, start, .. }) => {
                check_window(core, "/engine/core")?;
                if let StartSpec::PiAb { a, b } = start {
                    if !sigma_region(&g).contains(*a, *b) {
                        return Err(CliError::Precondition(format!(
                            "(a, b) = ({a}, {b}) lies outside the positivity region of the drift"
                        )));
                    }
                }
            }
            _ => {}
        }
        if let Some(d) = &self.tests.domination {
            check_window(&d.narrow, "/tests/domination/narrow")?;
            check_window(&d.wide, "/tests/domination/wide")?;
            if !d.wide.contains_window(&d.narrow) || !d.narrow.contains_gap(d.gap) {
                return Err(CliError::Precondition(
                    "domination needs narrow ⊂ wide and the gap inside the narrow window".into(),
                ));
            }
        }
        Ok(())
    }

    /// Initial condition of a two-sided engine.
    pub fn two_sided_init(&self) -> Result<(TwoSidedInit, AdaptiveOptions), CliError> {
        let EngineSpec::TwoSided {
            core,
            anchor,
            start,
            activation_eps,
            max_absorptions,
        } = self.engine()?
        else {
            return Err(CliError::Precondition("engine is not two_sided".into()));
        };
        let core = Window::new(core.m, core.n)?;
        let source = match start {
            StartSpec::PiAb { a, b } => GapSource::Exponential {
                law: RateLaw::PiAb {
                    g: self.drift.drift()?,
                    a: *a,
                    b: *b,
                },
            },
            StartSpec::Linear { c1, c2 } => GapSource::Exponential {
                law: RateLaw::Linear { c1: *c1, c2: *c2 },
            },
            StartSpec::Fixed { gaps, outer } => GapSource::Fixed {
                core: GapVector::new(core, gaps.clone())?,
                outer: *outer,
            },
        };
        let init = TwoSidedInit {
            anchor: *anchor,
            core,
            source,
        };
        let opts = AdaptiveOptions {
            activation_eps: *activation_eps,
            max_absorptions: *max_absorptions,
        };
        Ok((init, opts))
    }
}

fn check_window(w: &Window, pointer: &str) -> Result<(), CliError> {
    if w.m < w.n {
        Ok(())
    } else {
        Err(CliError::schema(
            pointer,
            format!("window [{}, {}] needs m < n", w.m, w.n),
        ))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses a configuration, reporting schema problems with a JSON pointer.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Map { key } => {
                    pointer.push('/');
                    pointer.push_str(&key.replace('~', "~0").replace('/', "~1"));
                }
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Enum { .. } | Segment::Unknown => {}
            }
        }
        let message = e.inner().to_string();
        if let Some(field) = missing_field(&message) {
            pointer.push('/');
            pointer.push_str(field);
        }
        CliError::schema(pointer, message)
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::schema(
            "/schema_version",
            format!(
                "unsupported schema_version {}; expected {SCHEMA_VERSION}",
                cfg.schema_version
            ),
        ));
    }
    Ok(cfg)
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "drift": {"kind": "list", "first": 1, "values": [1.0, 0.0]},
        "engine": {"kind": "named", "x0": [0.0, 1.0]},
        "sim": {"dt": 0.01, "horizon": 1.0, "replicas": 2, "seed": 3}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.diffusion, FieldSpec::unit());
        assert_eq!(c.output.format, OutputFormat::Csv);
        assert_eq!(c.burn_in().unwrap(), 0.5);
        c.validate().unwrap();
    }

    #[test]
    fn missing_key_points_at_the_key() {
        let text = MINIMAL.replace(r#""dt": 0.01, "#, "");
        let e = parse_config(&text).unwrap_err();
        match e {
            CliError::Schema { pointer, .. } => assert_eq!(pointer, "/sim/dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace(r#""seed": 3"#, r#""seed": 3, "sede": 4"#);
        assert_eq!(parse_config(&text).unwrap_err().exit_code(), 2);
        let text = MINIMAL.replace(r#""x0": [0.0, 1.0]"#, r#""x0": [0.0, 1.0], "y0": 1"#);
        assert_eq!(parse_config(&text).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn rate_only_config_needs_no_simulation() {
        let c = parse_config(r#"{"schema_version": 1, "drift": {"kind": "example", "id": 1}}"#).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed(), 0);
        match c.sim().unwrap_err() {
            CliError::Schema { pointer, .. } => assert_eq!(pointer, "/sim"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_a_schema_error() {
        let text = MINIMAL.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        match parse_config(&text).unwrap_err() {
            CliError::Schema { pointer, .. } => assert_eq!(pointer, "/schema_version"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pi_ab_start_outside_region_is_a_precondition_error() {
        let text = r#"{
            "schema_version": 1,
            "drift": {"kind": "example", "id": 3},
            "engine": {"kind": "two_sided", "core": {"m": -2, "n": 2},
                       "start": {"kind": "pi_ab", "a": 1.0, "b": 0.5}},
            "sim": {"dt": 0.01, "horizon": 1.0, "replicas": 2, "seed": 3}
        }"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 3);
    }

    #[test]
    fn overrides_change_the_hash() {
        let mut c = parse_config(MINIMAL).unwrap();
        let h = c.hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, parse_config(MINIMAL).unwrap().hash());
        c.apply(&Overrides {
            seed: Some(99),
            ..Default::default()
        });
        assert_eq!(c.seed(), 99);
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn output_dir_does_not_change_the_hash() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        b.apply(&Overrides {
            out: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(b.output.dir.as_deref(), Some("elsewhere"));
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn example_drifts_have_documented_shape() {
        let g3 = example_drift(3).unwrap();
        assert_eq!((g3.at(-5), g3.at(0), g3.at(1), g3.at(9)), (0.0, 0.0, 1.0, 1.0));
        let g4 = example_drift(4).unwrap();
        assert_eq!((g4.at(-5), g4.at(0), g4.at(1), g4.at(9)), (1.0, 1.0, 0.0, 0.0));
        let g5 = example_drift(5).unwrap();
        assert!((g5.sum_range(-60, 0) - 1.0).abs() < 1e-15);
        assert_eq!(g5.at(1), 0.0);
        assert!(example_drift(7).is_err());
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
