use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use decoupler_core::erasure::{cv_capacity, dv_capacity};
use decoupler_core::experiments::{
    exact_decoder, random_decoupled_state, run_cv_decoupling, run_dv_decoupling, run_passive_thermal_check,
    run_thermal_reduction_check, run_truncated_comparison, CvExperimentConfig, DvExperimentConfig, ExperimentResult,
    Partition, PassiveThermalConfig, ThermalReductionConfig, TruncatedComparisonConfig, DEFAULT_DECOUPLING_TOLERANCE,
};
use decoupler_core::report::{format_f64, serialize_result, to_json_bytes, Format};
use decoupler_core::twirl::twirl_check;
use decoupler_core::{Error as CoreError, HilbertSpec, PureState, C64};

use crate::config::{config_error, resolve, Overrides};
use crate::manifest::RunManifest;
use crate::{Command, Io};

pub enum Verdict {
    Held,
    Violated(String),
}

impl Verdict {
    fn check(ok: bool, what: impl FnOnce() -> String) -> Self {
        if ok {
            Verdict::Held
        } else {
            Verdict::Violated(what())
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwirlCheckConfig {
    pub d: usize,
    #[serde(default = "default_twirl_samples")]
    pub samples: usize,
    pub seed: u64,
}

fn default_twirl_samples() -> usize {
    2000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub p: f64,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub r0: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoState {
    #[default]
    Decoupled,
    Ghz,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeDemoConfig {
    pub dims: [usize; 3],
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub state: DemoState,
}

fn default_tolerance() -> f64 {
    DEFAULT_DECOUPLING_TOLERANCE
}

impl Io {
    fn paths(&self, command: &str, extensions: &[&str]) -> Vec<PathBuf> {
        let stem = self.name.as_deref().unwrap_or(command);
        extensions.iter().map(|ext| self.out_dir.join(format!("{stem}.{ext}"))).collect()
    }
}

fn write_all(files: &[(&PathBuf, Vec<u8>)]) -> anyhow::Result<()> {
    for (path, bytes) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn print_table(title: &str, rows: &[(&str, String)]) {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = format!("{title}\n");
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
    print!("{out}");
}

fn wrote(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

/// Writes the CSV/JSON pair of a decoupling run and prints its summary.
fn finish_experiment(
    command: &str,
    io: &Io,
    manifest: RunManifest,
    paths: &[PathBuf],
    result: &ExperimentResult,
) -> anyhow::Result<Verdict> {
    let csv = serialize_result(result, Format::Csv, Some(&manifest.to_stable_value()))?;
    let summary = serialize_result(result, Format::Json, Some(&manifest.to_value()))?;
    write_all(&[(&paths[0], csv), (&paths[1], summary)])?;
    let held = result.within_bound(2.0);
    let mut rows = vec![
        ("mean distance", format!("{:.6} ± {:.6}", result.mean, result.std_error)),
        ("bound (exact)", format!("{:.6}", result.bound_exact)),
        ("bound (asymptotic)", format!("{:.6}", result.bound_asymptotic)),
        ("gamma / Q", format!("{:.6} / {:.6}", result.gamma, result.capacity)),
        ("mean <= bound + 2 se", if held { "yes".into() } else { "NO".into() }),
        ("outputs", wrote(paths)),
    ];
    if let Some(t) = result.typical_dim {
        rows.insert(4, ("typical dimension", t.to_string()));
    }
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    print_table(
        &format!("{command} (config {})", io.config.as_deref().map_or("-".into(), |p| p.display().to_string())),
        &rows,
    );
    Ok(Verdict::check(held, || {
        format!("mean {} exceeds bound {} + 2 se", format_f64(result.mean), format_f64(result.bound_exact))
    }))
}

/// Writes `{report, passed, manifest}` as JSON.
fn write_report<T: Serialize>(
    paths: &[PathBuf],
    report: &T,
    passed: bool,
    manifest: &RunManifest,
) -> anyhow::Result<()> {
    let doc = json!({ "report": report, "passed": passed, "manifest": manifest.to_value() });
    write_all(&[(&paths[0], to_json_bytes(&doc)?)])
}

fn config_path(io: &Io) -> Option<&Path> {
    io.config.as_deref()
}

pub fn dispatch(command: Command) -> anyhow::Result<Verdict> {
    match command {
        Command::DecoupleDv { io, local_dim, n, k, erased_count, samples, seed } => {
            let mut o = Overrides::default();
            o.set("local_dim", local_dim)
                .set("n", n)
                .set("k", k)
                .set("erased_count", erased_count)
                .set("samples", samples)
                .set("seed", seed);
            let cfg: DvExperimentConfig = resolve(config_path(&io), o, true)?;
            cfg.validate()?;
            let paths = io.paths("decouple-dv", &["csv", "json"]);
            let manifest = RunManifest::new("decouple-dv", config_path(&io), &cfg, Some(cfg.seed)).with_outputs(&paths);
            let result = run_dv_decoupling(&cfg)?;
            finish_experiment("decouple-dv", &io, manifest, &paths, &result)
        }
        Command::DecoupleCv {
            io,
            n,
            k,
            r,
            n_bar,
            max_photons,
            delta,
            erased_count,
            samples,
            seed,
            marginal_mode,
            calibration_samples,
        } => {
            if let Some(nb) = n_bar {
                if nb.is_nan() || nb < 0.0 {
                    return Err(config_error(format!("--n-bar must be >= 0, got {nb}")));
                }
            }
            let mut o = Overrides::default();
            o.set("n", n)
                .set("k", k)
                .set("r", r.or(n_bar.map(|nb| nb.sqrt().asinh())))
                .set("truncation", max_photons.map(|m| json!({ "total_photon": m })))
                .set("delta", delta)
                .set("erased_count", erased_count)
                .set("samples", samples)
                .set("seed", seed)
                .set("marginal_mode", marginal_mode)
                .set("calibration_samples", calibration_samples);
            let cfg: CvExperimentConfig = resolve(config_path(&io), o, true)?;
            cfg.validate()?;
            let paths = io.paths("decouple-cv", &["csv", "json"]);
            let manifest = RunManifest::new("decouple-cv", config_path(&io), &cfg, Some(cfg.seed)).with_outputs(&paths);
            let result = run_cv_decoupling(&cfg)?;
            finish_experiment("decouple-cv", &io, manifest, &paths, &result)
        }
        Command::TwirlCheck { io, d, samples, seed } => {
            let mut o = Overrides::default();
            o.set("d", d).set("samples", samples).set("seed", seed);
            let cfg: TwirlCheckConfig = resolve(config_path(&io), o, true)?;
            let paths = io.paths("twirl-check", &["json"]);
            let manifest = RunManifest::new("twirl-check", config_path(&io), &cfg, Some(cfg.seed)).with_outputs(&paths);
            let check = twirl_check(cfg.d, cfg.samples, cfg.seed)?;
            write_report(&paths, &check, check.passed, &manifest)?;
            print_table(
                &format!("twirl-check d = {}, {} samples", cfg.d, cfg.samples),
                &[
                    (
                        "two-copy max |delta|",
                        format!("{:.3e} ({:.2} se)", check.double_max_abs_delta, check.double_max_z),
                    ),
                    (
                        "one-copy trace distance",
                        format!("{:.3e} (tolerance {:.3e})", check.single_trace_distance, check.single_tolerance),
                    ),
                    (
                        "E|U00|^2",
                        format!(
                            "{:.6} ± {:.6} (exact {:.6})",
                            check.second_moment.mean, check.second_moment.std_error, check.second_moment_exact
                        ),
                    ),
                    (
                        "E|U00|^4",
                        format!(
                            "{:.6} ± {:.6} (exact {:.6})",
                            check.fourth_moment.mean, check.fourth_moment.std_error, check.fourth_moment_exact
                        ),
                    ),
                    ("passed", check.passed.to_string()),
                    ("outputs", wrote(&paths)),
                ],
            );
            Ok(Verdict::check(check.passed, || "sampled twirl outside 3 se of the closed form".into()))
        }
        Command::PassiveThermal { io, n_bar, n_modes, samples, seed, cutoff } => {
            let mut o = Overrides::default();
            o.set("n_bar", n_bar)
                .set("n_modes", n_modes)
                .set("samples", samples)
                .set("seed", seed)
                .set("cutoff", cutoff);
            let cfg: PassiveThermalConfig = resolve(config_path(&io), o, true)?;
            let paths = io.paths("passive-thermal", &["json", "csv"]);
            let manifest =
                RunManifest::new("passive-thermal", config_path(&io), &cfg, Some(cfg.seed)).with_outputs(&paths);
            let report = run_passive_thermal_check(&cfg)?;
            let means: Vec<f64> = report.entries.iter().map(|e| e.tv.mean).collect();
            let decreasing = means.windows(2).all(|w| w[1] < w[0]);
            let dephased = report.entries.iter().all(|e| e.dephased_offdiag_max < 1e-12);
            let passed = decreasing && dephased;
            let mut csv = format!("# manifest: {}\nn_modes,sample_index,tv\n", manifest.to_stable_value());
            for e in &report.entries {
                for (i, tv) in e.per_sample_tv.iter().enumerate() {
                    let _ = writeln!(csv, "{},{i},{}", e.n_modes, format_f64(*tv));
                }
            }
            write_report(&paths[..1], &report, passed, &manifest)?;
            write_all(&[(&paths[1], csv.into_bytes())])?;
            let mut rows: Vec<(&str, String)> = Vec::new();
            let labels: Vec<String> = report.entries.iter().map(|e| format!("N = {}", e.n_modes)).collect();
            for (e, label) in report.entries.iter().zip(&labels) {
                rows.push((
                    label.as_str(),
                    format!(
                        "TV {:.5} ± {:.5}  p1/N {:.5}  q1 {:.5}  captured {:.6}",
                        e.tv.mean, e.tv.std_error, e.p1_over_n, e.q1, e.captured_probability
                    ),
                ));
            }
            rows.push(("decreasing", decreasing.to_string()));
            rows.push(("outputs", wrote(&paths)));
            print_table(&format!("passive-thermal n_bar = {}", cfg.n_bar), &rows);
            Ok(Verdict::check(passed, || "mode TV to thermal(n_bar/N) does not decrease with N".into()))
        }
        Command::ThermalReduction { io, n_modes, photons_per_mode } => {
            let mut o = Overrides::default();
            o.set("n_modes", n_modes).set("photons_per_mode", photons_per_mode);
            let cfg: ThermalReductionConfig = resolve(config_path(&io), o, false)?;
            let paths = io.paths("thermal-reduction", &["json"]);
            let manifest = RunManifest::new("thermal-reduction", config_path(&io), &cfg, None).with_outputs(&paths);
            let report = run_thermal_reduction_check(&cfg)?;
            write_report(&paths, &report, report.decreasing, &manifest)?;
            let labels: Vec<String> = report.entries.iter().map(|e| format!("N = {}", e.n_modes)).collect();
            let mut rows: Vec<(&str, String)> = report
                .entries
                .iter()
                .zip(&labels)
                .map(|(e, l)| (l.as_str(), format!("TV {:.6}  shell dim {}", e.tv, e.sector_dim)))
                .collect();
            rows.push(("decreasing", report.decreasing.to_string()));
            rows.push(("outputs", wrote(&paths)));
            print_table(&format!("thermal-reduction {} photons per mode", cfg.photons_per_mode), &rows);
            Ok(Verdict::check(report.decreasing, || "shell marginal TV does not decrease with N".into()))
        }
        Command::TruncatedCompare { io, n_c_values } => {
            let mut o = Overrides::default();
            o.set("n_c_values", n_c_values);
            let cfg: TruncatedComparisonConfig = resolve(config_path(&io), o, false)?;
            let paths = io.paths("truncated-compare", &["json"]);
            let manifest = RunManifest::new("truncated-compare", config_path(&io), &cfg, None).with_outputs(&paths);
            let report = run_truncated_comparison(&cfg)?;
            let runs_hold = [&report.truncated_run, &report.thermal_run]
                .iter()
                .all(|r| r.as_ref().is_none_or(|r| r.within_bound(2.0)));
            let passed = report.all_hold && runs_hold;
            write_report(&paths, &report, passed, &manifest)?;
            let labels: Vec<String> = report.comparisons.iter().map(|c| format!("n_c = {}", c.n_c)).collect();
            let mut rows: Vec<(&str, String)> = report
                .comparisons
                .iter()
                .zip(&labels)
                .map(|(c, l)| {
                    (
                        l.as_str(),
                        format!("g({:.1}) = {:.6} vs log2 n_c = {:.6}", c.n_bar, c.thermal_entropy, c.truncated_rate),
                    )
                })
                .collect();
            for (label, run) in [("uniform run", &report.truncated_run), ("thermal run", &report.thermal_run)] {
                if let Some(r) = run {
                    rows.push((label, format!("mean {:.6} ± {:.6}, bound {:.6}", r.mean, r.std_error, r.bound_exact)));
                }
            }
            rows.push(("all hold", passed.to_string()));
            rows.push(("outputs", wrote(&paths)));
            print_table("truncated-compare", &rows);
            Ok(Verdict::check(passed, || "a thermal-versus-uniform comparison failed".into()))
        }
        Command::Capacity { config, p, d, r0 } => {
            let mut o = Overrides::default();
            o.set("p", p).set("d", d).set("r0", r0);
            let cfg: CapacityConfig = resolve(config.as_deref(), o, false)?;
            match (cfg.d, cfg.r0) {
                (Some(d), None) => println!("{}", dv_capacity(cfg.p, d)?),
                (None, Some(r0)) => {
                    let q = cv_capacity(cfg.p, r0)?;
                    if q.clamped {
                        eprintln!("note: raw value {} clamped to 0", q.raw);
                    }
                    println!("{}", q.value);
                }
                _ => return Err(config_error("capacity needs exactly one of `d` (qudits) or `r0` (modes)")),
            }
            Ok(Verdict::Held)
        }
        Command::DecodeDemo { io, dims, seed, tolerance, ghz } => {
            let mut o = Overrides::default();
            let dims = match dims {
                Some(v) if v.len() != 3 => return Err(config_error("--dims takes exactly three values dR,dB,dE")),
                other => other,
            };
            o.set("dims", dims)
                .set("seed", seed)
                .set("tolerance", tolerance)
                .set("state", ghz.then_some(DemoState::Ghz));
            let cfg: DecodeDemoConfig = resolve(config_path(&io), o, true)?;
            let paths = io.paths("decode-demo", &["json"]);
            let manifest = RunManifest::new("decode-demo", config_path(&io), &cfg, Some(cfg.seed)).with_outputs(&paths);
            decode_demo(&cfg, &paths, &manifest)
        }
    }
}

fn ghz(dims: [usize; 3]) -> anyhow::Result<PureState> {
    let [a, b, c] = dims;
    if a != b || b != c || a < 2 {
        return Err(config_error("the GHZ state needs three equal dimensions >= 2"));
    }
    let spec = HilbertSpec::new(dims.to_vec())?;
    let amp = C64::new(1.0 / (a as f64).sqrt(), 0.0);
    let mut v = DVector::from_element(a * a * a, C64::new(0.0, 0.0));
    for i in 0..a {
        v[(i * a + i) * a + i] = amp;
    }
    Ok(PureState::new(v, spec)?)
}

fn decode_demo(cfg: &DecodeDemoConfig, paths: &[PathBuf], manifest: &RunManifest) -> anyhow::Result<Verdict> {
    let [dr, db, de] = cfg.dims;
    let psi = match cfg.state {
        DemoState::Decoupled => random_decoupled_state(dr, db, de, cfg.seed)?,
        DemoState::Ghz => ghz(cfg.dims)?,
    };
    let (report, verdict): (Value, Verdict) = match exact_decoder(&psi, &Partition::tripartite(), cfg.tolerance) {
        Ok(out) => {
            let ok = out.fidelity >= 1.0 - cfg.tolerance;
            print_table(
                &format!("decode-demo {dr}x{db}x{de}"),
                &[
                    ("violation", format!("{:.3e}", out.violation)),
                    ("ranks R / E", format!("{} / {}", out.rank_r, out.rank_e)),
                    ("fidelity", format!("{:.15}", out.fidelity)),
                    ("outputs", wrote(paths)),
                ],
            );
            let report = json!({
                "precondition": "held",
                "violation": out.violation,
                "fidelity": out.fidelity,
                "rank_r": out.rank_r,
                "rank_e": out.rank_e,
            });
            (report, Verdict::check(ok, || format!("fidelity {} below 1 - {}", out.fidelity, cfg.tolerance)))
        }
        Err(CoreError::DecouplingViolated { violation, tolerance }) => {
            print_table(
                &format!("decode-demo {dr}x{db}x{de}"),
                &[("violation", format!("{violation:.6} > {tolerance:e}")), ("outputs", wrote(paths))],
            );
            let report = json!({ "precondition": "violated", "violation": violation, "tolerance": tolerance });
            (report, Verdict::Violated(format!("R and E are correlated: ||rho_RE - rho_R x rho_E||_1 = {violation}")))
        }
        Err(e) => return Err(e.into()),
    };
    write_report(paths, &report, matches!(verdict, Verdict::Held), manifest)?;
    Ok(verdict)
}
