//! Subcommand implementations.
//!
//! Each command writes its human- or machine-readable result to the given
//! stdout handle (unless quiet) and, when an output directory is set, the
//! same content as stamped artifacts plus a manifest.

use std::io::Write;
use std::path::PathBuf;

use rankflow::rates::{
    difference_residual, finite_rates, lambda_ab_window, lambda_limit, sigma_region,
    window_rate_at, window_rates, FiniteRates, LimitOptions, LimitOutcome, LimitVerdict,
    RateSequence, WindowStrategy,
};
use rankflow::model::{DriftField, GapVector, Window};
use rankflow::simulate::{io, simulate_gap_srbm, NoiseStream, SimConfig};
use rankflow::stats::{decay_from_batch, domination_test, stationarity_report_at};
use serde_json::{json, Value};

use crate::acceptance;
use crate::artifact::{json_text, ArtifactDir, Stamp};
use crate::config::{example_drift, sha256_hex, EngineSpec, ExperimentConfig, OutputFormat};
use crate::engine::{
    default_indices, finite_coefficients, finite_particles, run_engine, stationary_target, thin_batch,
};
use crate::error::CliError;

/// Everything a command needs besides its own arguments.
pub struct Context<'a> {
    pub config: Option<ExperimentConfig>,
    /// Output directory after applying `--out`.
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub quiet: bool,
    pub stdout: &'a mut dyn Write,
}

impl Context<'_> {
    fn config(&self) -> Result<&ExperimentConfig, CliError> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Precondition("this command needs --config <path>".into()))
    }

    fn stamp(&self, command: &str) -> Result<Stamp, CliError> {
        let cfg = self.config()?;
        Ok(Stamp {
            command: command.into(),
            config_sha256: cfg.hash(),
            seed: cfg.seed(),
        })
    }

    fn print(&mut self, text: &str) -> Result<(), CliError> {
        if !self.quiet {
            self.stdout.write_all(text.as_bytes())?;
            self.stdout.flush()?;
        }
        Ok(())
    }

    fn artifacts(&self, stamp: &Stamp) -> Result<Option<ArtifactDir>, CliError> {
        self.out
            .as_ref()
            .map(|d| ArtifactDir::create(d, stamp.clone()))
            .transpose()
    }
}

fn rates_json(r: &RateSequence) -> Value {
    json!(r.indices().zip(&r.values).map(|(k, v)| json!({"index": k, "rate": v})).collect::<Vec<_>>())
}

// ---------------------------------------------------------------- rates

pub fn rates(ctx: &mut Context, finite: Option<Vec<f64>>) -> Result<(), CliError> {
    if let Some(g) = finite {
        return finite_only(ctx, &g);
    }
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("rates")?;
    let g = cfg.drift.drift()?;
    let (a, b) = (cfg.rates.a, cfg.rates.b);
    let w = Window::new(cfg.rates.window.m, cfg.rates.window.n)?;
    let ab = lambda_ab_window(&g, a, b, w);
    let residuals = difference_residual(&ab, &g).unwrap_or_default();
    let mut ab_csv = String::from("index,rate,residual\n");
    for (k, v) in ab.indices().zip(&ab.values) {
        let r = residuals.iter().find(|(i, _)| *i == k).map(|(_, r)| format!("{r:?}"));
        ab_csv.push_str(&format!("{k},{v:?},{}\n", r.unwrap_or_default()));
    }
    let wr = window_rates(&g, w);
    let mu = match cfg.engine.as_ref().and_then(finite_particles) {
        Some(n) => match finite_rates(&finite_coefficients(&cfg, n)?.0)? {
            FiniteRates::Stable(r) => Some(r),
            FiniteRates::Unstable(_) => None,
        },
        None => None,
    };
    let summary = stamp.json(json!({
        "a": a,
        "b": b,
        "in_sigma": sigma_region(&g).contains(a, b),
        "lambda_ab": rates_json(&ab),
        "max_abs_residual": residuals.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max),
        "window_rates": rates_json(&wr.rates),
        "window_assumption_holds": wr.assumption_holds,
        "finite_rates": mu.as_ref().map(rates_json),
    }));
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_csv("lambda_ab.csv", &ab_csv)?;
        dir.write_csv("window_rates.csv", &wr.rates.to_csv())?;
        if let Some(mu) = &mu {
            dir.write_csv("finite_rates.csv", &mu.to_csv())?;
        }
        dir.write_json("rates.json", summary.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&summary))
}

fn finite_only(ctx: &mut Context, g: &[f64]) -> Result<(), CliError> {
    let stamp = Stamp {
        command: "rates".into(),
        config_sha256: sha256_hex(&serde_json::to_vec(&json!({ "finite": g })).expect("serializable")),
        seed: ctx.seed_override.unwrap_or(0),
    };
    match finite_rates(g)? {
        FiniteRates::Stable(r) => {
            let text = stamp.csv(&r.to_csv());
            if let Some(mut dir) = ctx.artifacts(&stamp)? {
                dir.write_csv("finite_rates.csv", &r.to_csv())?;
                dir.finish()?;
            }
            ctx.print(&text)
        }
        FiniteRates::Unstable(v) => Err(CliError::Precondition(format!(
            "finite system is not stable: rate of gap {} is {} (rates {:?})",
            v.first_failure,
            v.mu[v.first_failure - 1],
            v.mu
        ))),
    }
}

// ---------------------------------------------------------- sigma-region

pub fn sigma(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("sigma-region")?;
    let g = cfg.drift.drift()?;
    let region = sigma_region(&g);
    let mut v = region.to_json();
    v["contains_rates_ab"] = json!(region.contains(cfg.rates.a, cfg.rates.b));
    let v = stamp.json(v);
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json("sigma_region.json", v.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))
}

// ---------------------------------------------------------- lambda-limit

fn verdict_json(v: &LimitVerdict) -> Value {
    let outcomes: Vec<Value> = v
        .outcomes
        .iter()
        .map(|(k, o)| match o {
            LimitOutcome::Finite(x) => json!({"index": k, "outcome": "finite", "value": x}),
            LimitOutcome::Infinite => json!({"index": k, "outcome": "infinite"}),
            LimitOutcome::Inconclusive => json!({"index": k, "outcome": "inconclusive"}),
        })
        .collect();
    json!({
        "outcomes": outcomes,
        "j_used": v.j_used,
        "all_finite": v.all_finite(),
        "all_infinite": v.all_infinite(),
    })
}

pub fn limit(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("lambda-limit")?;
    let spec = &cfg.rates.limit;
    let verdict = lambda_limit(&cfg.drift.drift()?, spec.strategy, &spec.indices, spec.options())?;
    let v = stamp.json(verdict_json(&verdict));
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json("lambda_limit.json", v.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))
}

// -------------------------------------------------------------- simulate

pub fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("simulate")?;
    let batch = run_engine(&cfg)?;
    let frames: usize = batch.replicas.iter().map(|r| r.frames.len()).sum();
    let events = batch.events().count();
    let out = ctx.out.clone().unwrap_or_else(|| PathBuf::from("rankflow-out"));
    let mut dir = ArtifactDir::create(&out, stamp.clone())?;
    match cfg.output.format {
        OutputFormat::Csv => dir.write_csv("trajectories.csv", &io::csv_string(&batch))?,
        OutputFormat::Binary => dir.write_bytes("trajectories.bin", &io::to_binary(&batch))?,
    }
    if matches!(cfg.engine()?, EngineSpec::TwoSided { .. }) {
        let mut buf = Vec::new();
        io::write_events_jsonl(batch.events(), &mut buf)?;
        dir.write_bytes("events.jsonl", &buf)?;
    }
    let summary = stamp.json(json!({
        "replicas": batch.replicas.len(),
        "frames": frames,
        "absorptions": events,
        "max_complementarity": batch.replicas.iter().map(|r| r.max_complementarity).fold(0.0, f64::max),
    }));
    dir.write_json("summary.json", summary.clone())?;
    let path = dir.finish()?;
    let mut text = json_text(&summary);
    text.push_str(&format!("artifacts written to {}\n", path.display()));
    ctx.print(&text)
}

// ----------------------------------------------------------- verify-*

pub fn verify_stationarity(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("verify-stationarity")?;
    let target = stationary_target(&cfg)?;
    let indices = cfg
        .tests
        .indices
        .clone()
        .unwrap_or_else(|| default_indices(cfg.engine().expect("checked by target")));
    let batch = thin_batch(&run_engine(&cfg)?, cfg.tests.thinning);
    let report = stationarity_report_at(&batch, &target, cfg.burn_in()?, &indices, cfg.tests.alpha)?;
    let v = stamp.json(report.to_json());
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json("stationarity.json", v.clone())?;
        dir.write_csv("stationarity.csv", &report.to_csv())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))?;
    if report.all_pass {
        Ok(())
    } else {
        let failed: Vec<i64> = report.gaps.iter().filter(|g| !g.pass).map(|g| g.index).collect();
        Err(CliError::VerificationFailed(format!(
            "gaps {failed:?} reject the product-form target at alpha = {}",
            report.alpha
        )))
    }
}

/// Seed of the second, independent system in two-sample comparisons.
fn companion_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn verify_domination(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("verify-domination")?;
    let spec = cfg
        .tests
        .domination
        .clone()
        .ok_or_else(|| CliError::schema("/tests/domination", "missing field `domination`"))?;
    let sim = cfg.sim()?;
    let g = cfg.drift.drift()?;
    let s = cfg.diffusion.diffusion()?;
    let burn_in = cfg.burn_in()?;
    let mut samples = Vec::new();
    let mut rate_info = Vec::new();
    for (w, seed) in [(spec.wide, sim.seed), (spec.narrow, companion_seed(sim.seed))] {
        let w = Window::new(w.m, w.n)?;
        let wr = window_rates(&g, w);
        if !wr.assumption_holds {
            return Err(CliError::Precondition(format!(
                "window [{}, {}] has a non-positive stationary rate",
                w.m, w.n
            )));
        }
        // Start at the stationary means; the burn-in removes the rest.
        let z0 = GapVector::new(w, wr.rates.values.iter().map(|l| 1.0 / l).collect())?;
        let sc = SimConfig { seed, ..sim };
        let batch = simulate_gap_srbm(&g.values(w.m, w.n), &s.values(w.m, w.n), &z0, &sc, &NoiseStream::counter(seed))?;
        let batch = thin_batch(&batch, cfg.tests.thinning);
        samples.push(batch.gap_samples(spec.gap, burn_in));
        rate_info.push(json!({"window": [w.m, w.n], "rate": wr.rates.get(spec.gap)}));
    }
    let verdict = domination_test(&samples[0], &samples[1], cfg.tests.alpha)?;
    let v = stamp.json(json!({
        "hypothesis": "gap of the wide window is stochastically dominated by the same gap of the narrow window",
        "gap": spec.gap,
        "windows": rate_info,
        "samples": [samples[0].len(), samples[1].len()],
        "verdict": verdict,
    }));
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json("domination.json", v.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))?;
    if verdict.reject {
        Err(CliError::VerificationFailed(format!(
            "domination rejected: statistic {} > critical {}",
            verdict.statistic, verdict.critical
        )))
    } else {
        Ok(())
    }
}

pub fn verify_decay(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let stamp = ctx.stamp("verify-decay")?;
    let sim = cfg.sim()?;
    let times = cfg
        .tests
        .decay_times
        .clone()
        .unwrap_or_else(|| vec![0.1 * sim.horizon, sim.horizon]);
    let batch = run_engine(&cfg)?;
    let d = decay_from_batch(&batch, cfg.tests.decay_gap, &times, cfg.tests.z)?;
    let pass = d.trend_z > cfg.tests.z;
    let v = stamp.json(json!({"gap": cfg.tests.decay_gap, "diagnostic": d, "pass": pass}));
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json("decay.json", v.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::VerificationFailed(format!(
            "mean gap {} decreased by {} standard errors, need more than {}",
            cfg.tests.decay_gap, d.trend_z, cfg.tests.z
        )))
    }
}

// ------------------------------------------------------------------ repro

/// Reproduction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReproTarget {
    #[value(name = "example-1")]
    Example1,
    #[value(name = "example-2")]
    Example2,
    #[value(name = "example-3")]
    Example3,
    #[value(name = "example-4")]
    Example4,
    #[value(name = "example-5")]
    Example5,
    #[value(name = "example-6")]
    Example6,
    Acceptance,
}

impl ReproTarget {
    pub fn name(&self) -> &'static str {
        match self {
            ReproTarget::Example1 => "example-1",
            ReproTarget::Example2 => "example-2",
            ReproTarget::Example3 => "example-3",
            ReproTarget::Example4 => "example-4",
            ReproTarget::Example5 => "example-5",
            ReproTarget::Example6 => "example-6",
            ReproTarget::Acceptance => "acceptance",
        }
    }
}

/// Σ region plus a few `(a, b)`-family rates, as one JSON object whose
/// top-level keys are those of the region.
fn sigma_example(id: u8, ab: Option<(f64, f64)>) -> Result<Value, CliError> {
    let g = example_drift(id)?;
    let mut v = sigma_region(&g).to_json();
    v["example"] = json!(id);
    if let Some((a, b)) = ab {
        let r = lambda_ab_window(&g, a, b, Window::new(-3, 4)?);
        v["rates"] = json!({"a": a, "b": b, "values": rates_json(&r)});
    }
    Ok(v)
}

/// Window rates `λ_k^{(j)}` for `j = 1..=j_max` at the given indices.
fn window_table(g: &DriftField, strategy: WindowStrategy, ks: &[i64], j_max: u64) -> Vec<Value> {
    (1..=j_max)
        .filter_map(|j| strategy.window(j).map(|w| (j, w)))
        .map(|(j, w)| {
            let rates: Vec<Value> = ks
                .iter()
                .filter(|k| w.contains_gap(**k))
                .map(|&k| json!({"index": k, "rate": window_rate_at(g, w, k)}))
                .collect();
            json!({"j": j, "window": [w.m, w.n], "rates": rates})
        })
        .collect()
}

pub fn repro_example(target: ReproTarget) -> Result<Value, CliError> {
    let ks: Vec<i64> = (-3..=3).collect();
    Ok(match target {
        ReproTarget::Example1 => sigma_example(1, Some((1.0, 0.0)))?,
        ReproTarget::Example2 => sigma_example(2, Some((1.0, 0.0)))?,
        ReproTarget::Example3 => sigma_example(3, Some((1.0, -1.0)))?,
        ReproTarget::Example4 => sigma_example(4, None)?,
        ReproTarget::Example5 => {
            let g = example_drift(5)?;
            let strategy = WindowStrategy::Geometric { base: 4 };
            let verdict = lambda_limit(&g, strategy, &ks, LimitOptions::default())?;
            let mut v = verdict_json(&verdict);
            // Partial-sum value 2 Σ_{n ≤ k∧0} g_n of each limit.
            v["partial_sum_oracle"] = json!(ks
                .iter()
                .map(|&k| json!({"index": k, "value": 2.0 * g.sum_range(-1000, k.min(0))}))
                .collect::<Vec<_>>());
            v["example"] = json!(5);
            v["strategy"] = json!(strategy);
            v
        }
        ReproTarget::Example6 => {
            let g = example_drift(6)?;
            let strategy = WindowStrategy::Symmetric;
            let verdict = lambda_limit(&g, strategy, &ks, LimitOptions::default())?;
            let mut v = verdict_json(&verdict);
            v["window_rates"] = json!(window_table(&g, strategy, &ks, 8));
            v["example"] = json!(6);
            v["strategy"] = json!(strategy);
            v
        }
        ReproTarget::Acceptance => unreachable!("handled by repro()"),
    })
}

pub fn repro(ctx: &mut Context, target: ReproTarget) -> Result<(), CliError> {
    let stamp = Stamp {
        command: format!("repro {}", target.name()),
        config_sha256: sha256_hex(&serde_json::to_vec(&json!({"repro": target.name()})).expect("serializable")),
        seed: 0,
    };
    if target == ReproTarget::Acceptance {
        let mut dir = ctx.artifacts(&stamp)?;
        let mut failed = Vec::new();
        for id in acceptance::ALL {
            let r = acceptance::run(id);
            ctx.print(&format!("{}\n", r.line()))?;
            if let Some(d) = &mut dir {
                d.write_json(&format!("criterion_{id:02}.json"), r.to_json())?;
            }
            if !r.pass {
                failed.push(id);
            }
        }
        if let Some(d) = dir {
            d.finish()?;
        }
        return if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::VerificationFailed(format!("criteria {failed:?} failed")))
        };
    }
    let v = stamp.json(repro_example(target)?);
    if let Some(mut dir) = ctx.artifacts(&stamp)? {
        dir.write_json(&format!("{}.json", target.name()), v.clone())?;
        dir.finish()?;
    }
    ctx.print(&json_text(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_reproductions_have_expected_shape() {
        let v = repro_example(ReproTarget::Example3).unwrap();
        assert_eq!(v["b_min"], -2.0);
        assert_eq!(v["b_max"], 0.0);
        assert_eq!(repro_example(ReproTarget::Example4).unwrap()["empty"], true);
        let v1 = repro_example(ReproTarget::Example1).unwrap();
        assert_eq!((v1["b_min"].as_f64(), v1["b_max"].as_f64()), (Some(0.0), Some(0.0)));
        assert_eq!(repro_example(ReproTarget::Example2).unwrap()["b_max"], 0.0);
        assert_eq!(repro_example(ReproTarget::Example5).unwrap()["all_finite"], true);
        let v6 = repro_example(ReproTarget::Example6).unwrap();
        assert_eq!(v6["all_infinite"], true);
        // λ_0 on the window [-2, 3] is 3.
        assert_eq!(v6["window_rates"][2]["window"], json!([-2, 3]));
        let r0 = v6["window_rates"][2]["rates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["index"] == 0)
            .unwrap()["rate"]
            .as_f64()
            .unwrap();
        assert!((r0 - 3.0).abs() < 1e-12);
    }
}
