use std::path::Path;

use num_complex::Complex64;
use num_rational::BigRational;
use serde::Serialize;

use hypnf::deformation::{
    deform, near_identity_slope, plane_grid, verify_conjugacy, ConjugacyResult, DeformationOptions,
    DeformationProblem, Identity,
};
use hypnf::flow::{
    certify_delta, estimate_gronwall, hitting_times, integrate, region_membership,
    variational_flow, FlowOptions, GronwallOptions,
};
use hypnf::homological::{
    make_partition, residual_check, FlatFunction, HomologicalOptions, HomologicalSolver,
};
use hypnf::io::{HamiltonianSpec, JetDoc, NormalFormDoc, Verification};
use hypnf::jet::{birkhoff_normalize, Jet, JetError};
use hypnf::smooth::{Hamiltonian, PhaseFunction};
use hypnf::symplectic::{complexify, williamson_from_jet, LinearOptions, SymplecticError};

use crate::chart::Chart;
use crate::report::{InputDigest, RunReport};
use crate::{Cli, CliError, Command, GridArgs, KappaChoice, Outputs, StepArgs};

/// δ when the input has no chart block.
const DEFAULT_DELTA: f64 = 1.0;
const DEFAULT_FLOW_TOL: f64 = 1e-10;
const DEFAULT_HOMOLOGICAL_TOL: f64 = 1e-7;
/// Samples for the slack estimate that feeds the decay bounds.
const SLACK_SAMPLES: usize = 16;

pub fn run(cli: &Cli, report: &mut RunReport, out: &mut Outputs) -> Result<(), CliError> {
    let spec = load(cli, report)?;
    report.param("seed", cli.seed);
    if let Some(t) = cli.tol {
        report.param("tol", t);
    }
    match &cli.command {
        Command::Williamson => williamson(&spec, report),
        Command::Bnf { exact } => bnf(cli, &spec, *exact, report),
        Command::Flow { rho, time, variational } => {
            flow(cli, &spec, &rho.0, *time, *variational, report, out)
        }
        Command::Hit { rho } => hit(cli, &spec, &rho.0, report, out),
        Command::Gronwall { samples, certify } => gronwall(cli, &spec, *samples, *certify, report),
        Command::Homological { points, residual, cutoff_order } => {
            homological(cli, &spec, points, *residual, *cutoff_order, report, out)
        }
        Command::Deform { grid, steps } => deform_cmd(cli, &spec, grid, steps, report, out),
        Command::Verify { kappa, grid, steps } => verify(cli, &spec, *kappa, grid, steps, report),
    }
}

fn load(cli: &Cli, report: &mut RunReport) -> Result<HamiltonianSpec, CliError> {
    let path = cli
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("--input FILE is required".into()))?;
    let bytes = std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    report.input = Some(InputDigest::of(path, &bytes));
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::Usage(format!("{}: not UTF-8: {e}", display(path))))?;
    Ok(HamiltonianSpec::parse(&text)?)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Resonance vectors are reported with their first nonzero entry positive.
fn canonical_k(k: &[i64]) -> Vec<i64> {
    match k.iter().find(|&&v| v != 0) {
        Some(&v) if v < 0 => k.iter().map(|x| -x).collect(),
        _ => k.to_vec(),
    }
}

pub fn describe(e: &CliError) -> String {
    match e {
        CliError::Jet(JetError::ResonanceObstruction { k, .. }) => {
            let k: Vec<String> = canonical_k(k).iter().map(i64::to_string).collect();
            format!("{e} (k = ({}))", k.join(", "))
        }
        _ => e.to_string(),
    }
}

pub fn record_error(report: &mut RunReport, e: &CliError) {
    if let CliError::Jet(JetError::ResonanceObstruction { monomial, k, value }) = e {
        #[derive(Serialize)]
        struct Resonance<'a> {
            k: Vec<i64>,
            monomial: &'a str,
            value: f64,
        }
        report.diag(
            "resonance",
            Resonance {
                k: canonical_k(k),
                monomial,
                value: *value,
            },
        );
    }
    report.exit_status.error = Some(describe(e));
}

fn check_point(rho: &[f64], n: usize) -> Result<(), CliError> {
    if rho.len() != 2 * n {
        return Err(CliError::Usage(format!(
            "point has {} coordinates, the input has n = {n} (expected {})",
            rho.len(),
            2 * n
        )));
    }
    Ok(())
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

// ------------------------------------------------------------- williamson

fn williamson(spec: &HamiltonianSpec, report: &mut RunReport) -> Result<(), CliError> {
    let jet: Jet<f64> = spec.jet()?;
    let (f, quads, frame) = williamson_from_jet(&jet, &LinearOptions::default())?;
    let doc = frame.document();
    eprintln!("{:>12} {:>12}  kind", "Re lambda", "Im lambda");
    for q in &quads.quads {
        eprintln!("{:>12.6} {:>12.6}  {:?}", q.lambda.re, q.lambda.im, q.kind);
    }
    eprintln!(
        "l = {}, m = {}, symplectic defect = {:.2e}",
        doc.ell, doc.m, doc.symplectic_defect
    );
    report.diag("frame", &doc);
    report.diag("spectrum", &quads);
    report.diag("hamiltonian_defect", f.hamiltonian_defect());
    Ok(())
}

// ------------------------------------------------------------- bnf

fn bnf(cli: &Cli, spec: &HamiltonianSpec, exact: bool, report: &mut RunReport) -> Result<(), CliError> {
    let order = cli.order.unwrap_or(spec.order);
    if order < 2 {
        return Err(CliError::Usage(format!("--order {order}: need N >= 2")));
    }
    report.param("order", order);
    report.param("exact", exact);
    let chart = Chart::new(spec, DEFAULT_DELTA)?;
    report.diag("frame", chart.frame.document());
    report.diag("spectrum", &chart.spectrum);
    let doc = if exact {
        if !chart.identity {
            return Err(CliError::Usage(
                "--exact needs a quadratic part already in Williamson form".into(),
            ));
        }
        let p: Jet<BigRational> = spec.jet()?;
        NormalFormDoc::from_result(&birkhoff_normalize(&p.with_order(order), order)?)
    } else if chart.frame.complex_blocks() > 0 {
        complex_bnf(&chart, order, report)?
    } else {
        NormalFormDoc::from_result(&birkhoff_normalize(&chart.jet.with_order(order), order)?)
    };
    eprintln!(
        "order {order}: {} nonzero generators, max non-action coefficient {:.2e}",
        doc.generators.iter().filter(|g| !g.terms.is_empty()).count(),
        doc.verification.max_non_action
    );
    report.diag("normal_form", doc);
    Ok(())
}

/// Loxodromic blocks are normalized in complex coordinates where their
/// actions are diagonal; results are mapped back to real coordinates.
fn complex_bnf(chart: &Chart, order: usize, report: &mut RunReport) -> Result<NormalFormDoc, CliError> {
    let map = complexify(&chart.frame)?;
    let pc: Jet<Complex64> = map.to_complex(&chart.jet.with_order(order));
    let nf = birkhoff_normalize(&pc, order)?;
    let real = |j: &Jet<Complex64>| -> Result<JetDoc, CliError> {
        map.to_real(j, 1e-9)
            .map(|r| JetDoc::from_jet(&r))
            .map_err(|im| {
                CliError::Spectrum(SymplecticError::NormalizationFailed {
                    detail: format!("imaginary residue {im:e} after returning to real coordinates"),
                })
            })
    };
    report.diag(
        "lambda_complex",
        nf.lambda.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
    );
    Ok(NormalFormDoc {
        order,
        lambda: nf.lambda.iter().map(|z| z.re).collect(),
        generators: nf.generators.iter().map(&real).collect::<Result<_, _>>()?,
        q0: real(&nf.q0.to_jet(order))?,
        transformed: real(&nf.transformed)?,
        verification: Verification {
            max_non_action: nf.max_non_action,
            residual_degree: nf.residual_degree,
        },
    })
}

// ------------------------------------------------------------- flow

#[derive(Serialize)]
struct FlowSummary<'a> {
    t_final: f64,
    final_state: &'a [f64],
    accepted_steps: usize,
    rejected_steps: usize,
    evaluations: usize,
    max_energy_drift: f64,
    error_estimate: f64,
    symplectic_defect: Option<f64>,
    det_dkappa: Option<f64>,
}

fn flow(
    cli: &Cli,
    spec: &HamiltonianSpec,
    rho: &[f64],
    time: f64,
    variational: bool,
    report: &mut RunReport,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let h = spec.hamiltonian()?;
    check_point(rho, h.dof())?;
    let tol = cli.tol.unwrap_or(DEFAULT_FLOW_TOL);
    report.param("rho", rho);
    report.param("time", time);
    report.param("ode_tol", tol);
    let opts = FlowOptions::with_tol(tol);
    let traj = if variational {
        variational_flow(&h, rho, time, &opts)?
    } else {
        integrate(&h, rho, time, &opts)?
    };
    let growth = traj
        .states
        .iter()
        .map(|y| h.hessian(y).singular_values().max())
        .fold(0.0, f64::max);
    let last_dk = traj.dkappa.as_ref().and_then(|m| m.last());
    report.diag(
        "trajectory",
        FlowSummary {
            t_final: traj.t_final(),
            final_state: traj.final_state(),
            accepted_steps: traj.stats.accepted,
            rejected_steps: traj.stats.rejected,
            evaluations: traj.stats.evals,
            max_energy_drift: traj.max_energy_drift,
            error_estimate: traj.error_bound(growth),
            symplectic_defect: traj.symplectic_defect(),
            det_dkappa: last_dk.map(|m| m.determinant()),
        },
    );
    out.csv.push(("trajectory.csv".into(), traj.to_csv()));
    Ok(())
}

// ------------------------------------------------------------- hit

fn hit(
    cli: &Cli,
    spec: &HamiltonianSpec,
    rho: &[f64],
    report: &mut RunReport,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let chart = Chart::new(spec, DEFAULT_DELTA)?;
    check_point(rho, chart.n())?;
    let y = chart.to_chart(rho);
    let tol = cli.tol.unwrap_or(DEFAULT_FLOW_TOL);
    report.param("rho", rho);
    report.param("ode_tol", tol);
    chart_params(&chart, report);
    report.diag("rho_chart", &y);
    report.diag("region", region_membership(&y, &chart.region)?);
    let ht = hitting_times(&chart.hamiltonian(), &y, &chart.region, chart.lambda_1, &FlowOptions::with_tol(tol))?;
    report.diag("hitting_times", ht);
    out.csv.push(("hitting_times.csv".into(), csv_table(&[ht])?));
    Ok(())
}

fn chart_params(chart: &Chart, report: &mut RunReport) {
    report.param("delta", chart.region.delta);
    report.param("cone_factor", chart.region.cone_factor);
    let b0: Vec<Vec<f64>> = (0..chart.n())
        .map(|i| chart.region.b0.b0.row(i).iter().copied().collect())
        .collect();
    report.param("b0", b0);
    report.param("lambda_1", chart.lambda_1);
    report.param("lambda_n", chart.lambda_n);
}

// ------------------------------------------------------------- gronwall

fn gronwall(
    cli: &Cli,
    spec: &HamiltonianSpec,
    samples: usize,
    certify: Option<usize>,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let chart = Chart::new(spec, DEFAULT_DELTA)?;
    chart_params(&chart, report);
    let tol = cli.tol.unwrap_or(DEFAULT_FLOW_TOL);
    report.param("samples", samples);
    report.param("ode_tol", tol);
    let opts = GronwallOptions {
        samples,
        seed: cli.seed,
        flow: FlowOptions::with_tol(tol),
        ..Default::default()
    };
    let h = chart.hamiltonian();
    let lambdas = (chart.lambda_1, chart.lambda_n);
    let rep = match certify {
        Some(halvings) => {
            report.param("max_halvings", halvings);
            certify_delta(&h, &chart.region, lambdas, &opts, halvings)?.1
        }
        None => estimate_gronwall(&h, &chart.region, lambdas, &opts)?,
    };
    eprintln!(
        "delta {}: lambda in [{:.6}, {:.6}], slack {:.3e}, monotone {}",
        rep.delta, rep.lambda_minus, rep.lambda_plus, rep.slack, rep.monotone
    );
    report.diag("gronwall", rep);
    Ok(())
}

fn slack_of(h: &dyn PhaseFunction, chart: &Chart, seed: u64) -> Result<f64, CliError> {
    let opts = GronwallOptions {
        samples: SLACK_SAMPLES,
        seed,
        ..Default::default()
    };
    Ok(estimate_gronwall(h, &chart.region, (chart.lambda_1, chart.lambda_n), &opts)?.slack)
}

// ------------------------------------------------------------- homological

#[derive(Serialize)]
struct HomologicalRow {
    #[serde(flatten)]
    point: PointCols,
    value: f64,
    error_estimate: f64,
    tail_bound: f64,
    panel_error: f64,
    ode_error: f64,
    evaluations: usize,
}

/// Coordinates as named CSV columns.
struct PointCols(Vec<f64>);

impl Serialize for PointCols {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let n = self.0.len() / 2;
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (i, v) in self.0.iter().enumerate() {
            let name = if i < n {
                format!("x{}", i + 1)
            } else {
                format!("xi{}", i - n + 1)
            };
            m.serialize_entry(&name, v)?;
        }
        m.end()
    }
}

fn homological_csv(n: usize, rows: &[HomologicalRow]) -> Result<String, CliError> {
    let err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("xi{i}")));
    header.extend(
        ["value", "error_estimate", "tail_bound", "panel_error", "ode_error", "evaluations"]
            .map(String::from),
    );
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec: Vec<String> = r.point.0.iter().map(|v| format!("{v:e}")).collect();
        rec.extend(
            [r.value, r.error_estimate, r.tail_bound, r.panel_error, r.ode_error]
                .iter()
                .map(|v| format!("{v:e}")),
        );
        rec.push(r.evaluations.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn homological(
    cli: &Cli,
    spec: &HamiltonianSpec,
    set: &crate::PointSet,
    residual: bool,
    cutoff_order: usize,
    report: &mut RunReport,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let chart = Chart::new(spec, DEFAULT_DELTA)?;
    let g = chart.remainder.clone().ok_or_else(|| {
        CliError::Usage("homological needs a flat_remainder in the input as right-hand side".into())
    })?;
    chart_params(&chart, report);
    let n = chart.n();
    let mut points = Vec::new();
    for p in &set.rho {
        check_point(&p.0, n)?;
        points.push(chart.to_chart(&p.0));
    }
    if let Some(k) = set.grid {
        let hw = set.half_width.unwrap_or(chart.region.delta / 2.0);
        report.param("grid", k);
        report.param("half_width", hw);
        let grid = plane_grid(n, k, hw);
        let before = grid.len();
        // f has no value at the fixed point itself
        points.extend(grid.into_iter().filter(|y| y.iter().any(|&v| v != 0.0)));
        report.param("origin_skipped", points.len() < before + set.rho.len());
    }
    if points.is_empty() {
        return Err(CliError::Usage("give --rho and/or --grid".into()));
    }
    let tol = cli.tol.unwrap_or(DEFAULT_HOMOLOGICAL_TOL);
    report.param("quad_tol", tol);
    report.param("cutoff_order", cutoff_order);
    report.param("flat_certificate", g.certificate());

    let h = Hamiltonian::from_jet(chart.jet.clone());
    let slack = slack_of(&h, &chart, cli.seed)?;
    report.diag("slack", slack);
    let solver = HomologicalSolver::new(
        &h,
        chart.region.clone(),
        make_partition(cutoff_order, chart.region.b0.clone())?,
        chart.lambda_1,
        slack,
        HomologicalOptions::with_tol(tol),
    );
    let mut rows = Vec::with_capacity(points.len());
    for (y, v) in points.iter().zip(solver.solve_many(&g, &points)) {
        let v = v?;
        rows.push(HomologicalRow {
            point: PointCols(y.clone()),
            value: v.value,
            error_estimate: v.error_estimate(),
            tail_bound: v.tail_bound,
            panel_error: v.panel_error,
            ode_error: v.ode_error,
            evaluations: v.evaluations,
        });
    }
    let worst = rows.iter().map(|r| r.error_estimate).fold(0.0, f64::max);
    report.diag("max_error_estimate", worst);
    if residual {
        let f = |y: &[f64]| solver.solve(&g, y).map(|v| v.value).unwrap_or(f64::NAN);
        let gv = |y: &[f64]| g.value(y);
        let rep = residual_check(&h, &f, &gv, &points, 1e-3, &FlowOptions::with_tol(1e-12))?;
        report.diag("max_residual", rep.max_residual);
        report.table("residual", &rep.rows);
    }
    out.csv.push(("homological.csv".into(), homological_csv(n, &rows)?));
    report.table("solutions", &rows);
    Ok(())
}

// ------------------------------------------------------------- deform / verify

fn problem(
    cli: &Cli,
    spec: &HamiltonianSpec,
    steps: &StepArgs,
    report: &mut RunReport,
) -> Result<(DeformationProblem, Chart), CliError> {
    let chart = Chart::new(spec, DEFAULT_DELTA)?;
    let base = DeformationOptions::default();
    let opts = DeformationOptions {
        quad_tol: cli.tol.unwrap_or(base.quad_tol),
        ode_tol: steps.ode_tol.unwrap_or(base.ode_tol),
        s_steps: steps.s_steps,
        seed: cli.seed,
        ..base
    };
    report.param("deformation", opts);
    chart_params(&chart, report);
    let r = chart
        .remainder
        .clone()
        .unwrap_or_else(|| FlatFunction::zero(chart.n(), 8));
    report.param("flat_certificate", r.certificate());
    let prob = DeformationProblem::new(chart.jet.clone(), r, chart.region.delta, opts)?;
    Ok((prob, chart))
}

fn grid_points(chart: &Chart, g: &GridArgs, report: &mut RunReport) -> Vec<Vec<f64>> {
    let hw = g.half_width.unwrap_or(2.0 * chart.region.delta / 3.0);
    report.param("grid", g.grid);
    report.param("half_width", hw);
    plane_grid(chart.n(), g.grid, hw)
}

/// Two points off the axes, carried along to monitor symplecticity.
fn probes(chart: &Chart) -> Vec<Vec<f64>> {
    let n = chart.n();
    let d = chart.region.delta;
    [[0.4, 1.0 / 3.0], [-0.5, 1.0 / 6.0]]
        .iter()
        .map(|p| {
            let mut y = vec![0.0; 2 * n];
            y[0] = p[0] * d;
            y[n] = p[1] * d;
            y
        })
        .collect()
}

fn conjugacy_diagnostics(res: &ConjugacyResult, chart: &Chart, report: &mut RunReport) -> Result<(), CliError> {
    let n = chart.n();
    let mut ray = vec![0.0; 2 * n];
    ray[0] = 0.5 * chart.region.delta;
    ray[n] = 0.4 * chart.region.delta;
    let slope = near_identity_slope(&res.kappa1, &ray, 6)?;
    report.diag("conjugacy", &res.report);
    report.diag("final_residual", res.report.residual.max);
    let displacement = res
        .grid
        .iter()
        .zip(&res.images)
        .flat_map(|(y, k)| y.iter().zip(k).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    report.diag("max_displacement", displacement);
    report.diag("kappa_error_estimate", res.kappa_error_estimate());
    report.diag("max_symplectic_defect", res.max_symplectic_defect());
    report.diag("near_identity_slope", slope);
    report.diag("slack", res.slack);
    report.diag("decay_margin", res.decay_margin);
    report.table("nodes", &res.nodes);
    eprintln!(
        "residual max {:.3e} vs baseline {:.3e} (reduction {:.3e}), symplectic defect {:.2e}, slope {:.2}",
        res.report.residual.max,
        res.report.baseline.max,
        res.report.reduction,
        res.max_symplectic_defect(),
        slope
    );
    Ok(())
}

fn deform_cmd(
    cli: &Cli,
    spec: &HamiltonianSpec,
    grid: &GridArgs,
    steps: &StepArgs,
    report: &mut RunReport,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let (prob, chart) = problem(cli, spec, steps, report)?;
    let pts = grid_points(&chart, grid, report);
    let res = deform(&prob, &pts, &probes(&chart))?;
    conjugacy_diagnostics(&res, &chart, report)?;
    out.csv.push(("conjugacy.csv".into(), res.residual_csv()));
    Ok(())
}

fn verify(
    cli: &Cli,
    spec: &HamiltonianSpec,
    kappa: KappaChoice,
    grid: &GridArgs,
    steps: &StepArgs,
    report: &mut RunReport,
) -> Result<(), CliError> {
    let (prob, chart) = problem(cli, spec, steps, report)?;
    let pts = grid_points(&chart, grid, report);
    report.param("kappa", format!("{kappa:?}").to_lowercase());
    let p = prob.q_s(1.0);
    let q0 = prob.q0_function();
    match kappa {
        KappaChoice::Identity => {
            let rep = verify_conjugacy(&p, &Identity, &q0, &pts)?;
            eprintln!("identity: residual max {:.3e} (= baseline)", rep.residual.max);
            report.diag("final_residual", rep.residual.max);
            report.diag("conjugacy", rep);
        }
        KappaChoice::Deformed => {
            let res = deform(&prob, &pts, &probes(&chart))?;
            // an independent pass over the grid with the replayed map
            let rep = verify_conjugacy(&p, &res.kappa1, &q0, &pts)?;
            report.diag("replay_matches", rep == res.report);
            conjugacy_diagnostics(&res, &chart, report)?;
        }
    }
    Ok(())
}
