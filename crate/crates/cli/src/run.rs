//! Dispatch from an experiment kind to the core pipelines.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nessedp_core::bfunction::BredOptions;
use nessedp_core::gradsys::{edi_residual, integrate_gradient_flow, Scheme, StepControl};
use nessedp_core::membrane::{
    assemble_quadratic_pde, effective_membrane_gs, membrane_steady_flux, otto_slow_fast, quadratic_eps_sweep, quadratic_limit,
    sorption_coeffs_const, transmission_coeffs, FvOptions, LinearFv, MembraneProfile, TransmissionCoeffs,
};
use nessedp_core::quadratic::{self, bred_quadratic};
use nessedp_core::reactions::{self, bred_explicit, kappa_eff};
use nessedp_core::slowfast::{
    assemble_eps_gs, bred_numeric, convergence_study, solve_fast_ness, FastNessOptions, InitialFast, SlowFastSystem,
    StudyOptions,
};
use nessedp_core::{GradientSystem, Space, Trajectory, Vector};

use crate::config::{set_dotted, ExperimentConfig, ExperimentKind, StructureName, SystemSpec};
use crate::error::{CliError, Result};
use crate::plot::{emit_plotdata, PlotSpec};
use crate::table::{Cell, Check, ResultTable, Summary, TableMetadata};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "NESSEDP_THREADS";

/// Step halvings in the refined-step EDI limit.
const EDI_LEVELS: usize = 7;
/// Cells per subinterval for BVP coefficient routes.
const BVP_CELLS: usize = 512;

/// Worker cap: `NESSEDP_THREADS` when set to a positive integer, else the core count.
pub fn worker_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Map `f` over `items` on at most `worker_cap()` threads, keeping input order.
fn pool_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = worker_cap().min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item mapped"))
        .collect()
}

/// Tables, checks and metrics of one run. `tables[0]` is the primary table.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    pub kind: ExperimentKind,
    pub system: String,
    pub seed: u64,
    pub tables: Vec<ResultTable>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub plots: Vec<PlotSpec>,
    pub metadata: TableMetadata,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn primary(&self) -> &ResultTable {
        &self.tables[0]
    }

    pub fn table(&self, role: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|t| t.name == role)
    }

    /// Write every table, the plot panels and the JSON summary into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Summary> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut files = Vec::new();
        for (i, t) in self.tables.iter().enumerate() {
            let file = if i == 0 {
                format!("{}.csv", self.name)
            } else {
                format!("{}.{}.csv", self.name, t.name)
            };
            t.write_csv(&dir.join(&file))?;
            files.push(file);
        }
        for spec in &self.plots {
            let table = match &spec.table {
                None => self.primary(),
                Some(role) => self
                    .table(role)
                    .ok_or_else(|| CliError::validation("plot.table", format!("no table `{role}` in this run")))?,
            };
            let path = emit_plotdata(table, spec, dir, &self.name)?;
            files.push(path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
        }
        let summary_file = format!("{}.summary.json", self.name);
        files.push(summary_file.clone());
        let summary = Summary {
            name: self.name.clone(),
            kind: self.kind.to_string(),
            system: self.system.clone(),
            seed: self.seed,
            passed: self.passed(),
            metadata: self.metadata.clone(),
            checks: self.checks.clone(),
            metrics: self.metrics.clone(),
            files,
        };
        summary.write(&dir.join(summary_file))?;
        Ok(summary)
    }
}

/// Partial result of one pipeline before metadata is attached.
struct Outcome {
    tables: Vec<ResultTable>,
    checks: Vec<Check>,
    metrics: BTreeMap<String, f64>,
    plots: Vec<PlotSpec>,
}

impl Outcome {
    fn new(primary: ResultTable) -> Self {
        Self {
            tables: vec![primary],
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            plots: Vec::new(),
        }
    }
}

/// The kind to run: the command-line kind, which must agree with `kind` in the file if present.
pub fn resolve_kind(cfg: &ExperimentConfig, requested: Option<ExperimentKind>) -> Result<ExperimentKind> {
    match (requested, cfg.kind) {
        (Some(r), Some(c)) if r != c => Err(CliError::validation("kind", format!("config declares `{c}`, command asked for `{r}`"))),
        (Some(k), _) | (None, Some(k)) => Ok(k),
        (None, None) => Err(CliError::validation("kind", "not given on the command line or in the config")),
    }
}

/// Run without writing files.
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<Report> {
    let started = Instant::now();
    let mut out = match kind {
        ExperimentKind::Simulate => simulate(cfg)?,
        ExperimentKind::Reduce => reduce(cfg)?,
        ExperimentKind::VerifyEdi => verify_edi(cfg)?,
        ExperimentKind::Converge => converge(cfg)?,
        ExperimentKind::Membrane => membrane(cfg)?,
        ExperimentKind::Reaction => reaction(cfg)?,
        ExperimentKind::Sweep => sweep(cfg)?,
    };
    out.plots.extend(cfg.plots.iter().cloned());
    let metadata = TableMetadata {
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    for t in &mut out.tables {
        t.metadata = metadata.clone();
    }
    Ok(Report {
        name: cfg.name.clone(),
        kind,
        system: cfg.system.label().to_string(),
        seed: cfg.seed,
        tables: out.tables,
        checks: out.checks,
        metrics: out.metrics,
        plots: out.plots,
        metadata,
    })
}

/// Run and write outputs into `cfg.out_dir`.
pub fn execute(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<(Report, Summary)> {
    let report = run_experiment(cfg, kind)?;
    let summary = report.write(&cfg.out_dir)?;
    Ok((report, summary))
}

fn unsupported(kind: &str, system: &SystemSpec) -> CliError {
    CliError::validation("system.type", format!("`{kind}` does not apply to a {} system", system.label()))
}

fn fixed_steps(t_final: f64, steps: usize) -> StepControl {
    StepControl::fixed(t_final / steps as f64).with_scheme(Scheme::Extrapolated)
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn header(parts: &[&[String]]) -> Vec<String> {
    parts.iter().flat_map(|p| p.iter().cloned()).collect()
}

fn table_with(name: &str, columns: Vec<String>) -> ResultTable {
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    ResultTable::new(name, &refs)
}

fn energies(gs: &GradientSystem, tr: &Trajectory) -> Result<Vec<f64>> {
    Ok(tr.states.iter().map(|u| gs.energy.value(u)).collect::<nessedp_core::Result<_>>()?)
}

fn non_increasing(e: &[f64]) -> bool {
    e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// A slow-fast fixture with its effective system and a default slow state.
struct SlowFastCase {
    sf: SlowFastSystem,
    effective: GradientSystem,
    u0: Vector,
}

fn slow_fast_case(cfg: &ExperimentConfig) -> Result<SlowFastCase> {
    let (sf, effective, default) = match &cfg.system {
        SystemSpec::Quadratic(q) => (
            quadratic::to_slow_fast(q)?,
            quadratic::effective_gs(q)?,
            Vector::from_fn(q.slow_dim(), |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
        ),
        SystemSpec::Reactions(r) => (
            reactions::to_slow_fast(r)?,
            reactions::effective_gs(r)?,
            Vector::from_row_slice(&[2.0, 1.5, 0.2]),
        ),
        other => return Err(CliError::validation("system.type", format!("expected a slow-fast system, got {}", other.label()))),
    };
    let u0 = initial(cfg, default)?;
    Ok(SlowFastCase { sf, effective, u0 })
}

fn initial(cfg: &ExperimentConfig, default: Vector) -> Result<Vector> {
    match &cfg.u0 {
        None => Ok(default),
        Some(u) if u.len() == default.len() => Ok(u.clone()),
        Some(u) => Err(CliError::validation("u0", format!("expected {} components, got {}", default.len(), u.len()))),
    }
}

/// `(U0, w~(U0))`.
fn well_prepared(case: &SlowFastCase) -> Result<Vector> {
    let w = solve_fast_ness(&case.sf, &case.u0, &FastNessOptions::default())?.w;
    Ok(Vector::from_iterator(case.u0.len() + w.len(), case.u0.iter().chain(w.iter()).copied()))
}

fn network_gs(cfg: &ExperimentConfig) -> Result<Option<(GradientSystem, Vector, Vec<String>)>> {
    let SystemSpec::Network { species, network } = &cfg.system else {
        return Ok(None);
    };
    let n = network.species();
    let default = Vector::from_fn(n, |i, _| network.c_star[i] * if i % 2 == 0 { 1.5 } else { 0.6 });
    let u0 = initial(cfg, default)?;
    let gs = GradientSystem::new(Space::positive(n, "X"), Arc::new(network.entropy()), Arc::new(network.clone()))?;
    Ok(Some((gs, u0, species.clone())))
}

/// Constant membrane values `(a, b, k)`.
type MembraneConstants = Option<(f64, f64, f64)>;

fn membrane_parts(cfg: &ExperimentConfig) -> Option<(StructureName, &MembraneProfile, MembraneConstants)> {
    match &cfg.system {
        SystemSpec::Membrane {
            structure,
            profile,
            constants,
        } => Some((*structure, profile, *constants)),
        _ => None,
    }
}

fn smooth_slow(x: &[f64]) -> Vector {
    Vector::from_iterator(x.len(), x.iter().map(|&x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos() + 0.3 * x))
}

fn slow_cells_initial(cfg: &ExperimentConfig, limit: &LinearFv) -> Result<Vector> {
    initial(cfg, smooth_slow(&limit.centers))
}

fn membrane_coefficients(profile: &MembraneProfile) -> Result<TransmissionCoeffs> {
    Ok(transmission_coeffs(profile, BVP_CELLS)?)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let steps = cfg.grid.steps.unwrap_or(200);
    let ctrl = fixed_steps(cfg.t_final, steps);
    match &cfg.system {
        SystemSpec::Quadratic(_) | SystemSpec::Reactions(_) => {
            let case = slow_fast_case(cfg)?;
            let (ns, nf) = (case.sf.slow_dim(), case.sf.fast_dim());
            let mut runs: Vec<(Option<f64>, GradientSystem, Vector)> = Vec::new();
            if cfg.eps.is_empty() {
                runs.push((None, case.effective.clone(), case.u0.clone()));
            } else {
                let z0 = well_prepared(&case)?;
                for &eps in &cfg.eps {
                    runs.push((Some(eps), assemble_eps_gs(&case.sf, eps)?.gs, z0.clone()));
                }
            }
            let full = !cfg.eps.is_empty();
            let (us, ws) = (indexed("u", ns), if full { indexed("w", nf) } else { Vec::new() });
            let lead = ["eps".to_string(), "t".to_string()];
            let mut table = table_with("trajectory", header(&[&lead, &us, &ws, &["energy".to_string()]]));
            let mut out_checks = Vec::new();
            for (eps, gs, z0) in &runs {
                let tr = integrate_gradient_flow(gs, z0, cfg.t_final, &ctrl)?;
                let e = energies(gs, &tr)?;
                for (k, s) in tr.states.iter().enumerate() {
                    let mut row: Vec<Cell> = vec![eps.unwrap_or(0.0).into(), tr.times[k].into()];
                    row.extend(s.iter().map(|&x| Cell::Float(x)));
                    row.push(e[k].into());
                    table.push(row);
                }
                let tag = eps.map_or("effective".to_string(), |e| format!("eps={e}"));
                out_checks.push(Check::holds(format!("energy non-increasing ({tag})"), non_increasing(&e)));
            }
            let mut out = Outcome::new(table);
            out.checks = out_checks;
            Ok(out)
        }
        SystemSpec::Network { .. } => {
            let (gs, u0, species) = network_gs(cfg)?.expect("network system");
            let tr = integrate_gradient_flow(&gs, &u0, cfg.t_final, &ctrl)?;
            let e = energies(&gs, &tr)?;
            let mut table = table_with("trajectory", header(&[&["t".to_string()], &species, &["entropy".to_string()]]));
            for (k, s) in tr.states.iter().enumerate() {
                let mut row: Vec<Cell> = vec![tr.times[k].into()];
                row.extend(s.iter().map(|&x| Cell::Float(x)));
                row.push(e[k].into());
                table.push(row);
            }
            let SystemSpec::Network { network, .. } = &cfg.system else { unreachable!() };
            let q = network.conserved_quantities();
            let drift = tr
                .states
                .iter()
                .map(|s| (q.transpose() * (s - &u0)).amax())
                .fold(0.0, f64::max);
            let mut out = Outcome::new(table);
            out.checks.push(Check::holds("entropy non-increasing", non_increasing(&e)));
            out.checks.push(Check::at_most("conserved quantities drift", drift, 1e-10 * (1.0 + u0.amax())));
            Ok(out)
        }
        SystemSpec::Membrane { structure, profile, .. } => simulate_membrane(cfg, *structure, profile, steps),
    }
}

fn simulate_membrane(cfg: &ExperimentConfig, structure: StructureName, profile: &MembraneProfile, steps: usize) -> Result<Outcome> {
    let n = cfg.grid.n.unwrap_or(32);
    let mut energy = ResultTable::new("trajectory", &["eps", "t", "energy", "mass"]);
    let mut snapshot = ResultTable::new("snapshot", &["eps", "t", "x", "u"]);
    let mut checks = Vec::new();
    match structure {
        StructureName::Quadratic => {
            let opts = FvOptions {
                steps,
                scheme: Scheme::Extrapolated,
            };
            let limit = quadratic_limit(profile, n)?;
            let slow0 = slow_cells_initial(cfg, &limit)?;
            let mut runs: Vec<(f64, LinearFv, Vector)> = Vec::new();
            if cfg.eps.is_empty() {
                runs.push((0.0, limit.clone(), slow0.clone()));
            }
            for &eps in &cfg.eps {
                let pde = assemble_quadratic_pde(profile, eps, n)?;
                let u0 = pde.well_prepared(&slow0)?;
                runs.push((eps, pde, u0));
            }
            for (eps, fv, u0) in &runs {
                let tr = fv.integrate(u0, cfg.t_final, &opts)?;
                let e: Vec<f64> = tr.states.iter().map(|u| fv.energy(u)).collect();
                let m0 = fv.total_mass(u0);
                let mut drift: f64 = 0.0;
                for (k, s) in tr.states.iter().enumerate() {
                    let m = fv.total_mass(s);
                    drift = drift.max((&m - &m0).amax());
                    energy.push(vec![(*eps).into(), tr.times[k].into(), e[k].into(), m.sum().into()]);
                }
                for &t in &cfg.times {
                    let state = tr.at(t);
                    let slow = if *eps == 0.0 { state } else { fv.slow_part(&state)? };
                    for (i, &x) in limit.centers.iter().enumerate() {
                        snapshot.push(vec![(*eps).into(), t.into(), x.into(), slow[i].into()]);
                    }
                }
                checks.push(Check::holds(format!("energy non-increasing (eps={eps})"), non_increasing(&e)));
                checks.push(Check::at_most(format!("mass drift (eps={eps})"), drift, 1e-12 * (1.0 + m0.amax())));
            }
        }
        StructureName::Otto | StructureName::Sorption => {
            if !cfg.eps.is_empty() {
                return Err(CliError::validation("eps", "entropic membranes simulate the effective system only; drop `eps`"));
            }
            let coeffs = membrane_coefficients(profile)?;
            let eff = effective_membrane_gs(profile, &coeffs, structure.into(), cfg.grid.n.unwrap_or(8).max(2))?;
            let u0 = initial(cfg, Vector::from_iterator(eff.grid.len(), eff.grid.nodes.iter().map(|&x| 1.0 + 0.4 * (0.8 * x).sin())))?;
            let tr = integrate_gradient_flow(&eff.gs, &u0, cfg.t_final, &fixed_steps(cfg.t_final, steps))?;
            let e = energies(&eff.gs, &tr)?;
            let mass = |u: &Vector| -> f64 { eff.grid.mass.iter().zip(u.iter()).map(|(m, x)| m * x).sum() };
            let m0 = mass(&u0);
            let mut drift: f64 = 0.0;
            for (k, s) in tr.states.iter().enumerate() {
                let m = mass(s);
                drift = drift.max((m - m0).abs());
                energy.push(vec![0.0.into(), tr.times[k].into(), e[k].into(), m.into()]);
            }
            for &t in &cfg.times {
                let s = tr.at(t);
                for (i, &x) in eff.grid.nodes.iter().enumerate() {
                    snapshot.push(vec![0.0.into(), t.into(), x.into(), s[i].into()]);
                }
            }
            checks.push(Check::holds("entropy non-increasing", non_increasing(&e)));
            // Sorption exchanges mass with the membrane, so only the Otto structure conserves it.
            if structure == StructureName::Otto {
                checks.push(Check::at_most("mass drift", drift, 1e-12 * (1.0 + m0.abs())));
            }
        }
    }
    let mut out = Outcome::new(energy);
    out.tables.push(snapshot);
    out.checks = checks;
    Ok(out)
}

fn random_vector(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_fn(n, |_, _| r.random_range(lo..hi))
}

fn reduce(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = BredOptions::default();
    if let Some((structure, profile, _)) = membrane_parts(cfg) {
        let sorption = match structure {
            StructureName::Quadratic => return Err(unsupported("reduce", &cfg.system)),
            StructureName::Otto => false,
            StructureName::Sorption => true,
        };
        let ms = otto_slow_fast(profile, cfg.grid.n.unwrap_or(8), cfg.grid.n_fast.unwrap_or(32), sorption)?;
        let mut table = ResultTable::new("null", &["sample", "b_red_at_minus_de"]);
        let mut worst: f64 = 0.0;
        for k in 0..cfg.samples {
            let u = random_vector(&mut r, ms.sf.slow_dim(), 0.2, 3.0);
            let xi = -ms.sf.energy.gradient(&u)?;
            let b = bred_numeric(&ms.sf, &u, &xi, &opts)?;
            worst = worst.max(b.abs());
            table.push(vec![k.into(), b.into()]);
        }
        let mut out = Outcome::new(table);
        out.checks.push(Check::at_most("null saddle |B_red(U, -DE)|", worst, cfg.tol));
        return Ok(out);
    }
    let case = slow_fast_case(cfg)?;
    let ns = case.sf.slow_dim();
    let (lo, hi, xi_span) = match &cfg.system {
        SystemSpec::Quadratic(_) => (-2.0, 2.0, 2.0),
        _ => (0.1, 4.0, 1.0),
    };
    let closed = |u: &Vector, xi: &Vector| -> Result<f64> {
        Ok(match &cfg.system {
            SystemSpec::Quadratic(q) => bred_quadratic(q, u, xi)?,
            SystemSpec::Reactions(c) => bred_explicit(c, u, xi)?,
            _ => unreachable!("slow_fast_case admits only quadratic and reactions"),
        })
    };
    let (us, xis) = (indexed("u", ns), indexed("xi", ns));
    let tail = ["numeric", "closed_form", "rel_error"].map(String::from);
    let mut table = table_with("bred", header(&[&["sample".to_string()], &us, &xis, &tail]));
    let mut worst: f64 = 0.0;
    let mut null: f64 = 0.0;
    for k in 0..cfg.samples {
        let u = random_vector(&mut r, ns, lo, hi);
        let xi = random_vector(&mut r, ns, -xi_span, xi_span);
        let num = bred_numeric(&case.sf, &u, &xi, &opts)?;
        let exact = closed(&u, &xi)?;
        let err = rel(num, exact);
        worst = worst.max(err);
        let force = -case.sf.energy.gradient(&u)?;
        null = null.max(closed(&u, &force)?.abs());
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(u.iter().chain(xi.iter()).map(|&x| Cell::Float(x)));
        row.extend([num.into(), exact.into(), err.into()]);
        table.push(row);
    }
    let mut out = Outcome::new(table);
    out.checks.push(Check::at_most("bred_numeric vs closed form", worst, cfg.tol));
    out.checks.push(Check::at_most("closed form null saddle", null, cfg.tol));
    out.metrics.insert("max_rel_error".into(), worst);
    Ok(out)
}

/// Residuals on successive halvings of `h` and their Aitken limit.
pub fn edi_levels(gs: &GradientSystem, u0: &Vector, t_final: f64, h: f64) -> Result<(Vec<(f64, f64)>, f64)> {
    let mut rows = Vec::with_capacity(EDI_LEVELS);
    for k in 0..EDI_LEVELS {
        let hk = h / 2f64.powi(k as i32);
        let ctrl = StepControl::fixed(hk).with_scheme(Scheme::Extrapolated);
        let tr = integrate_gradient_flow(gs, u0, t_final, &ctrl)?;
        rows.push((hk, edi_residual(gs, &tr)?));
    }
    let limit = aitken_limit(rows[EDI_LEVELS - 3].1, rows[EDI_LEVELS - 2].1, rows[EDI_LEVELS - 1].1);
    Ok((rows, limit))
}

/// Aitken delta-squared limit of `a, b, c`; `c` when the second difference vanishes.
pub fn aitken_limit(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom.abs() > 1e-300 {
        c - (c - b).powi(2) / denom
    } else {
        c
    }
}

fn edi_systems(cfg: &ExperimentConfig) -> Result<Vec<(String, GradientSystem, Vector)>> {
    let mut systems = Vec::new();
    match &cfg.system {
        SystemSpec::Quadratic(_) | SystemSpec::Reactions(_) => {
            let case = slow_fast_case(cfg)?;
            let z0 = well_prepared(&case)?;
            for &eps in &cfg.eps {
                systems.push((format!("eps={eps}"), assemble_eps_gs(&case.sf, eps)?.gs, z0.clone()));
            }
            systems.push(("effective".to_string(), case.effective, case.u0));
        }
        SystemSpec::Network { .. } => {
            let (gs, u0, _) = network_gs(cfg)?.expect("network system");
            systems.push(("network".to_string(), gs, u0));
        }
        SystemSpec::Membrane { structure, profile, .. } => match structure {
            StructureName::Quadratic => {
                let n = cfg.grid.n.unwrap_or(16);
                let limit = quadratic_limit(profile, n)?;
                let slow0 = slow_cells_initial(cfg, &limit)?;
                for &eps in &cfg.eps {
                    let pde = assemble_quadratic_pde(profile, eps, n)?;
                    let u0 = pde.well_prepared(&slow0)?;
                    systems.push((format!("eps={eps}"), pde.gradient_system()?, u0));
                }
                systems.push(("limit".to_string(), limit.gradient_system()?, slow0));
            }
            StructureName::Otto | StructureName::Sorption => {
                let coeffs = membrane_coefficients(profile)?;
                let eff = effective_membrane_gs(profile, &coeffs, (*structure).into(), cfg.grid.n.unwrap_or(8).max(2))?;
                let u0 = initial(cfg, Vector::from_iterator(eff.grid.len(), eff.grid.nodes.iter().map(|&x| 1.0 + 0.4 * (0.8 * x).sin())))?;
                systems.push(("effective".to_string(), eff.gs, u0));
            }
        },
    }
    Ok(systems)
}

fn verify_edi(cfg: &ExperimentConfig) -> Result<Outcome> {
    let systems = edi_systems(cfg)?;
    let h = cfg.t_final / cfg.grid.steps.unwrap_or(100) as f64;
    let results = pool_map(&systems, |(_, gs, u0)| edi_levels(gs, u0, cfg.t_final, h));
    let mut table = ResultTable::new("edi", &["system", "residual"]);
    let mut levels = ResultTable::new("levels", &["system", "h", "residual"]);
    let mut out_checks = Vec::new();
    for ((name, _, _), res) in systems.iter().zip(results) {
        let (rows, limit) = res?;
        for (hk, rk) in rows {
            levels.push(vec![name.as_str().into(), hk.into(), rk.into()]);
        }
        table.push(vec![name.as_str().into(), limit.into()]);
        out_checks.push(Check::at_most(format!("EDI residual ({name})"), limit, cfg.tol));
    }
    let mut out = Outcome::new(table);
    out.tables.push(levels);
    out.checks = out_checks;
    Ok(out)
}

fn converge(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.eps.len() < 2 {
        return Err(CliError::validation("eps", "at least two values"));
    }
    let mut table = ResultTable::new("convergence", &["eps", "sup_error", "order"]);
    let mut out_checks = Vec::new();
    let mut metrics = BTreeMap::new();
    let errors: Vec<f64> = if let Some((structure, profile, _)) = membrane_parts(cfg) {
        if structure != StructureName::Quadratic {
            return Err(unsupported("converge", &cfg.system));
        }
        let n = cfg.grid.n.unwrap_or(64);
        let limit = quadratic_limit(profile, n)?;
        let slow0 = slow_cells_initial(cfg, &limit)?;
        let opts = FvOptions {
            steps: cfg.grid.steps.unwrap_or(200),
            scheme: Scheme::Extrapolated,
        };
        quadratic_eps_sweep(profile, &cfg.eps, n, &slow0, cfg.t_final, &opts)?
    } else {
        let case = slow_fast_case(cfg)?;
        let opts = StudyOptions {
            steps: cfg.grid.steps.unwrap_or(2000),
            threads: worker_cap().min(cfg.eps.len()),
            ..Default::default()
        };
        let rep = convergence_study(&case.sf, &cfg.eps, &case.u0, &InitialFast::WellPrepared, cfg.t_final, &case.effective, &opts)?;
        rep.rows.iter().map(|r| r.sup_error).collect()
    };
    let mut last_order = None;
    for (k, (&eps, &err)) in cfg.eps.iter().zip(&errors).enumerate() {
        let order = (k > 0).then(|| (errors[k - 1] / err).ln() / (cfg.eps[k - 1] / eps).ln());
        last_order = order.or(last_order);
        table.push(vec![eps.into(), err.into(), order.map_or(Cell::Text(String::new()), Cell::Float)]);
    }
    out_checks.push(Check::holds("sup_error decreasing", errors.windows(2).all(|w| w[1] < w[0])));
    if !matches!(cfg.system, SystemSpec::Membrane { .. }) {
        let p = last_order.unwrap_or(f64::NAN);
        out_checks.push(Check::at_most("order - 1 (last pair)", p - 1.0, 0.3));
        metrics.insert("order_last_pair".into(), p);
    }
    let mut out = Outcome::new(table);
    out.checks = out_checks;
    out.metrics = metrics;
    out.plots.push(PlotSpec::new("error", None, "eps", &["sup_error"]));
    Ok(out)
}

fn membrane(cfg: &ExperimentConfig) -> Result<Outcome> {
    let Some((structure, profile, constants)) = membrane_parts(cfg) else {
        return Err(unsupported("membrane", &cfg.system));
    };
    let coeffs = membrane_coefficients(profile)?;
    let cols = ["sigma", "h_k", "k_eff", "m_eff", "m_minus", "m_plus"];
    let closed_cols = ["closed_k_eff", "closed_m_eff", "closed_m_minus", "closed_m_plus"];
    let all: Vec<&str> = cols.iter().chain(closed_cols.iter()).copied().collect();
    let mut table = ResultTable::new("coefficients", &all);
    let mut out_checks = Vec::new();
    let sigma = constants.map_or(f64::NAN, |(a, b, k)| (a.sqrt() * b / k).sqrt());
    let mut row: Vec<Cell> = vec![
        sigma.into(),
        coeffs.h_k[(0, 0)].into(),
        coeffs.k_eff.into(),
        coeffs.m_eff.into(),
        coeffs.m_minus.into(),
        coeffs.m_plus.into(),
    ];
    if let Some((a, b, k)) = constants {
        let exact = sorption_coeffs_const(a, b, k)?;
        for (what, got, want) in [
            ("k_eff", coeffs.k_eff, exact.k_eff),
            ("m_eff", coeffs.m_eff, exact.m_eff),
            ("m_minus", coeffs.m_minus, exact.m_minus),
            ("m_plus", coeffs.m_plus, exact.m_plus),
        ] {
            out_checks.push(Check::at_most(format!("{what} BVP vs closed form"), rel(got, want), cfg.tol));
            row.push(want.into());
        }
    } else {
        row.extend((0..closed_cols.len()).map(|_| Cell::Text(String::new())));
    }
    table.push(row);
    let mut out = Outcome::new(table);
    out.checks = out_checks;
    out.metrics.insert("h_k".into(), coeffs.h_k[(0, 0)]);
    out.metrics.insert("k_eff".into(), coeffs.k_eff);
    let (lo, hi) = (Vector::from_element(1, 0.3), Vector::from_element(1, 1.4));
    let flux = membrane_steady_flux(profile, cfg.grid.n.unwrap_or(64), &lo, &hi)?;
    let expect = -(&coeffs.h_k * (&hi - &lo));
    out.checks.push(Check::at_most("steady flux vs H_K jump", (flux - &expect).amax() / expect.amax(), cfg.tol));

    if structure == StructureName::Quadratic {
        let eps = cfg.eps.first().copied().unwrap_or(0.05);
        let n = cfg.grid.n.unwrap_or(64);
        let opts = FvOptions {
            steps: cfg.grid.steps.unwrap_or(200),
            scheme: Scheme::Extrapolated,
        };
        let limit = quadratic_limit(profile, n)?;
        let slow0 = slow_cells_initial(cfg, &limit)?;
        let pde = assemble_quadratic_pde(profile, eps, n)?;
        let eps_tr = pde.integrate(&pde.well_prepared(&slow0)?, cfg.t_final, &opts)?;
        let lim_tr = limit.integrate(&slow0, cfg.t_final, &opts)?;
        let mut snap = ResultTable::new("snapshot", &["t", "x", "u_eps", "u_limit"]);
        let mut gap: f64 = 0.0;
        for &t in &cfg.times {
            let ue = pde.slow_part(&eps_tr.at(t))?;
            let ul = lim_tr.at(t);
            for (i, &x) in limit.centers.iter().enumerate() {
                gap = gap.max((ue[i] - ul[i]).abs());
                snap.push(vec![t.into(), x.into(), ue[i].into(), ul[i].into()]);
            }
        }
        out.metrics.insert("snapshot_sup_gap".into(), gap);
        out.metrics.insert("snapshot_eps".into(), eps);
        out.tables.push(snap);
        out.plots.push(PlotSpec::new("snapshot", Some("snapshot"), "x", &["u_eps", "u_limit"]));
    }
    Ok(out)
}

fn reaction(cfg: &ExperimentConfig) -> Result<Outcome> {
    let SystemSpec::Reactions(rc) = &cfg.system else {
        return Err(unsupported("reaction", &cfg.system));
    };
    let sf = reactions::to_slow_fast(rc)?;
    let levels = cfg.levels.clone().unwrap_or_else(|| vec![0.25, 1.0, 4.0]);
    let dirs = [[0.4, -0.3, 0.2], [-0.6, 0.5, 0.8], [1.0, 1.0, -1.0]];
    let mut points = Vec::new();
    for &a in &levels {
        for &b in &levels {
            for &c in &levels {
                for d in &dirs {
                    points.push(([a, b, c], *d));
                }
            }
        }
    }
    let opts = BredOptions::default();
    let values = pool_map(&points, |(u, xi)| -> Result<(f64, f64)> {
        let (u, xi) = (Vector::from_row_slice(u), Vector::from_row_slice(xi));
        Ok((bred_explicit(rc, &u, &xi)?, bred_numeric(&sf, &u, &xi, &opts)?))
    });
    let mut table = ResultTable::new("bred", &["a", "b", "c", "xi1", "xi2", "xi3", "explicit", "numeric", "rel_error"]);
    let mut worst: f64 = 0.0;
    for ((u, xi), res) in points.iter().zip(values) {
        let (exact, num) = res?;
        let err = rel(num, exact);
        worst = worst.max(err);
        let mut row: Vec<Cell> = u.iter().chain(xi.iter()).map(|&x| Cell::Float(x)).collect();
        row.extend([exact.into(), num.into(), err.into()]);
        table.push(row);
    }
    let mut ke = ResultTable::new("kappa_eff", &["a", "kappa_eff"]);
    let mut inside = true;
    for k in 0..=40 {
        let a = if k == 0 { 0.0 } else { 1e-3 * 10f64.powf(5.0 * (k - 1) as f64 / 39.0) };
        let v = kappa_eff(rc, a);
        inside &= v > 0.0 && v <= rc.kappa2;
        ke.push(vec![a.into(), v.into()]);
    }
    let mut out = Outcome::new(table);
    out.tables.push(ke);
    out.checks.push(Check::at_most("bred_explicit vs bred_numeric", worst, cfg.tol));
    out.checks.push(Check::holds("kappa_eff in ]0, kappa2]", inside));
    out.metrics.insert("kappa_eff_at_zero".into(), kappa_eff(rc, 0.0));
    out.metrics.insert("max_rel_error".into(), worst);
    out.plots.push(PlotSpec::new("kappa_eff", Some("kappa_eff"), "a", &["kappa_eff"]));
    Ok(out)
}

fn sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::validation("sweep", "a `[sweep]` table is required"))?;
    let mut entries = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut doc = cfg.document.clone();
        doc.remove("sweep");
        doc.remove("plot");
        doc.insert("kind".into(), toml::Value::String(spec.kind.to_string()));
        set_dotted(&mut doc, &spec.parameter, toml::Value::Float(value))?;
        entries.push((value, crate::config::from_document(doc, Some(&cfg.name))?));
    }
    let reports = pool_map(&entries, |(_, c)| run_experiment(c, spec.kind));
    let mut done = Vec::with_capacity(reports.len());
    for ((value, _), rep) in entries.iter().zip(reports) {
        done.push((*value, rep?));
    }
    let mut keys: Vec<String> = done.iter().flat_map(|(_, r)| r.metrics.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let mut cols = vec!["value".to_string(), "passed".to_string(), "checks_failed".to_string()];
    cols.extend(keys.iter().cloned());
    let mut table = table_with("sweep", cols);
    let mut out_checks = Vec::new();
    for (value, rep) in &done {
        let failed = rep.checks.iter().filter(|c| !c.passed).count();
        let mut row: Vec<Cell> = vec![(*value).into(), rep.passed().into(), failed.into()];
        row.extend(keys.iter().map(|k| rep.metrics.get(k).map_or(Cell::Text(String::new()), |&v| Cell::Float(v))));
        table.push(row);
        out_checks.push(Check::holds(format!("{} = {value}", spec.parameter), rep.passed()));
    }
    let mut out = Outcome::new(table);
    out.checks = out_checks;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_map_keeps_order() {
        let xs: Vec<usize> = (0..17).collect();
        assert_eq!(pool_map(&xs, |x| x * 2), xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn aitken_limit_of_a_geometric_sequence_is_exact() {
        assert!((aitken_limit(1.5, 1.25, 1.125) - 1.0).abs() < 1e-14);
        assert_eq!(aitken_limit(2.0, 2.0, 2.0), 2.0);
    }
}
