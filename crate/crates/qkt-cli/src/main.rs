//! Batch front-end: configuration loading, table ingestion with a
//! verification gate, task dispatch, deterministic JSON report emission.
//!
//! Exit codes: 0 success, 2 data incomplete (missing correlator keys),
//! 3 verification failure, 4 configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qkt_core::bracket::BracketEngine;
use qkt_core::config as qconfig;
use qkt_core::correlator::{Composite, CorrelatorProvider, FileTable, PointGenus0Builtin, Recording};
use qkt_core::error::EngineError;
use qkt_core::insertion::InsertionPoly;
use qkt_core::kbasis::{KBasisSpec, KVector};
use qkt_core::qfun::{LaurentPoly, QRat};
use qkt_core::recon1::perm_rewrite_verify;
use qkt_core::sector::SectorFamily;
use qkt_core::series::{RingContext, TruncatedSeries};
use qkt_core::verify;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
enum Task {
    #[serde(rename = "verify")]
    #[value(name = "verify")]
    Verify,
    #[serde(rename = "reconstruct-g0")]
    #[value(name = "reconstruct-g0")]
    ReconstructG0,
    #[serde(rename = "reconstruct-g1-point")]
    #[value(name = "reconstruct-g1-point")]
    ReconstructG1Point,
    #[serde(rename = "cone-check")]
    #[value(name = "cone-check")]
    ConeCheck,
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Verify => "verify",
            Task::ReconstructG0 => "reconstruct-g0",
            Task::ReconstructG1Point => "reconstruct-g1-point",
            Task::ConeCheck => "cone-check",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qkt", about = "Exact quantum K-theory reconstruction engine", version)]
struct Args {
    /// Run configuration file (JSON); individual flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ring_context: Option<PathBuf>,
    #[arg(long)]
    basis_spec: Option<PathBuf>,
    /// Truncation order override.
    #[arg(long)]
    order: Option<u32>,
    /// Largest sector override.
    #[arg(long)]
    max_cycle: Option<u32>,
    /// Directory of correlator tables (*.jsonl).
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Genus-1 table bundle (JSON).
    #[arg(long)]
    genus1_tables: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Input profile (JSON).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Report output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the table verification gate.
    #[arg(long)]
    force: bool,
    /// Exponent window for cone-check sample directions.
    #[arg(long)]
    cone_window: Option<i64>,
}

#[derive(Deserialize, Default)]
struct ConfigFile {
    ring_context: Option<String>,
    basis_spec: Option<String>,
    order: Option<u32>,
    max_cycle: Option<u32>,
    tables: Option<String>,
    genus1_tables: Option<String>,
    task: Option<Task>,
    input: Option<String>,
    out: Option<String>,
    #[serde(default)]
    force: bool,
    cone_window: Option<i64>,
}

struct Resolved {
    ring_context: PathBuf,
    basis_spec: Option<PathBuf>,
    order: Option<u32>,
    max_cycle: Option<u32>,
    tables: Option<PathBuf>,
    genus1_tables: Option<PathBuf>,
    task: Task,
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    force: bool,
    cone_window: i64,
}

fn resolve(args: &Args) -> Result<Resolved, String> {
    let mut file = ConfigFile::default();
    let base: PathBuf = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {}", p.display(), e))?;
            file = serde_json::from_str(&text).map_err(|e| format!("{}: {}", p.display(), e))?;
            p.parent().unwrap_or(Path::new(".")).to_path_buf()
        }
        None => PathBuf::from("."),
    };
    let rel = |s: &String| base.join(s);
    let ring_context = args
        .ring_context
        .clone()
        .or_else(|| file.ring_context.as_ref().map(rel))
        .ok_or("no ring context given (use --ring-context or a config file)")?;
    let task = args.task.or(file.task).ok_or("no task given (use --task)")?;
    Ok(Resolved {
        ring_context,
        basis_spec: args.basis_spec.clone().or_else(|| file.basis_spec.as_ref().map(rel)),
        order: args.order.or(file.order),
        max_cycle: args.max_cycle.or(file.max_cycle),
        tables: args.tables.clone().or_else(|| file.tables.as_ref().map(rel)),
        genus1_tables: args.genus1_tables.clone().or_else(|| file.genus1_tables.as_ref().map(rel)),
        task,
        input: args.input.clone().or_else(|| file.input.as_ref().map(rel)),
        out: args.out.clone().or_else(|| file.out.as_ref().map(rel)),
        force: args.force || file.force,
        cone_window: args.cone_window.or(file.cone_window).unwrap_or(2),
    })
}

fn exit_code_for(err: &EngineError) -> u8 {
    match err {
        EngineError::DataIncomplete { .. } => 2,
        EngineError::Verification(_) | EngineError::NonContraction { .. } => 3,
        _ => 4,
    }
}

fn series_value(s: &TruncatedSeries) -> Value {
    json!({
        "text": qconfig::render_series(s),
        "terms": qconfig::series_json(s),
    })
}

fn family_value(f: &SectorFamily<KVector>) -> Value {
    let mut m = BTreeMap::new();
    for (r, v) in f.sectors() {
        m.insert(
            r.to_string(),
            Value::Array(v.comps.iter().map(series_value).collect()),
        );
    }
    json!(m)
}

fn laurent_family_value(f: &SectorFamily<qkt_core::kbasis::KvLaurent>) -> Value {
    let mut m = BTreeMap::new();
    for (r, kv) in f.sectors() {
        let comps: Vec<Value> = kv
            .iter()
            .map(|lp| {
                let terms: Vec<Value> = lp
                    .terms
                    .iter()
                    .map(|(q, c)| json!({"q": q, "value": qconfig::series_json(c), "text": qconfig::render_series(c)}))
                    .collect();
                Value::Array(terms)
            })
            .collect();
        m.insert(r.to_string(), Value::Array(comps));
    }
    json!(m)
}

struct LoadedWorld {
    ctx: Arc<RingContext>,
    basis: KBasisSpec,
    tables: Vec<FileTable>,
    genus1: Option<qkt_core::recon1::Genus1Tables>,
}

fn load_world(r: &Resolved) -> Result<LoadedWorld, EngineError> {
    let (ctx0, basis_from_ring) = qconfig::load_ring_context(&r.ring_context)?;
    let mut gens = ctx0.gens.clone();
    let order = r.order.unwrap_or(ctx0.order);
    let max_cycle = r.max_cycle.unwrap_or(ctx0.max_cycle);
    let conductor = ctx0.conductor;
    gens.shrink_to_fit();
    let ctx = RingContext::new(gens, order, max_cycle)?.with_conductor(conductor);

    let basis_path = r.basis_spec.clone().or(basis_from_ring);
    let basis = match basis_path {
        Some(p) => qconfig::load_basis(&p)?,
        None => KBasisSpec::point(),
    };

    let mut tables = Vec::new();
    if let Some(dir) = &r.tables {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| EngineError::Config(format!("cannot read tables dir {}: {}", dir.display(), e)))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|x| x == "jsonl").unwrap_or(false))
            .collect();
        entries.sort();
        for p in entries {
            tables.push(qconfig::load_correlator_table(&p, &ctx)?);
        }
    }
    let genus1 = match &r.genus1_tables {
        Some(p) => Some(qconfig::load_genus1_tables(p, &ctx)?),
        None => None,
    };
    Ok(LoadedWorld { ctx, basis, tables, genus1 })
}

/// The table verification gate: string and dilaton identities on sampled
/// reduced keys inside each table's declared coverage, plus the sector
/// rewrite consistency of the genus-1 bundle.
fn gate_reports(world: &LoadedWorld, provider: &dyn CorrelatorProvider) -> Vec<verify::VerifyReport> {
    let ctx = &world.ctx;
    let mut reports = Vec::new();
    for table in &world.tables {
        let mut report = verify::VerifyReport::new(&format!("gate:{}", table.name));
        // sample reduced keys: every row key, plus synthesized small keys in
        // coverage (the one- and two-sector shapes)
        let mut samples: Vec<qkt_core::correlator::RawKey> = table.values.keys().cloned().collect();
        for r in 2..=ctx.max_cycle.min(3) {
            let slots = vec![
                qkt_core::correlator::SlotKey { cycle: r, lm1_power: 0, basis: 0 },
                qkt_core::correlator::SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                qkt_core::correlator::SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
            ];
            samples.push(qkt_core::correlator::RawKey::new(0, Default::default(), slots));
        }
        for key in samples {
            if key.genus != 0 {
                continue;
            }
            // only check keys whose extension stays inside the domain
            let mut extended = key.slots.clone();
            extended.push(qkt_core::correlator::SlotKey { cycle: 1, lm1_power: 0, basis: 0 });
            let ext = qkt_core::correlator::RawKey::new(0, key.degree.clone(), extended);
            if ext.structurally_zero() {
                continue;
            }
            if provider.eval(&ext).is_err() {
                continue;
            }
            match verify::check_string_on_key(provider, ctx, &key) {
                Ok(None) => report.checked += 1,
                Ok(Some(f)) => report.failures.push(f),
                Err(_) => {}
            }
            match verify::check_dilaton_on_key(provider, ctx, &key) {
                Ok(None) => report.checked += 1,
                Ok(Some(f)) => report.failures.push(f),
                Err(_) => {}
            }
        }
        reports.push(report);
    }
    if let Some(g1) = &world.genus1 {
        let mut report = verify::VerifyReport::new("gate:genus1-rewrite");
        for (m, block) in &g1.perm {
            let failures = perm_rewrite_verify(*m, block);
            report.checked += block.rows.iter().filter(|r| r.trailing_dilaton).count() as u64;
            report.failures.extend(failures);
        }
        reports.push(report);
    }
    reports
}

fn default_tau(ctx: &Arc<RingContext>, rank: usize) -> SectorFamily<KVector> {
    let mut f = SectorFamily::new(ctx.max_cycle);
    if ctx.rank_of_exponents() > 0 {
        let mut v = KVector::zero(ctx, rank);
        v.comps[0] = TruncatedSeries::generator(ctx, 0);
        f.set(1, v);
    }
    f
}

fn run_task(
    world: &LoadedWorld,
    r: &Resolved,
    provider: &Recording<'_>,
) -> Result<Value, EngineError> {
    let ctx = &world.ctx;
    let engine = BracketEngine::new(ctx, &world.basis, provider);
    match r.task {
        Task::Verify => {
            let mut suites: Vec<verify::VerifyReport> = Vec::new();
            let (s, d) = verify::verify_string_dilaton_builtin(provider, ctx, 5)?;
            suites.push(s);
            suites.push(d);
            // each tau-dependent suite runs at the largest order whose key
            // demands stay inside the built-in five-point range: a bracket
            // with b declared slots reaches b + order marked points
            let capped_engine = |cap: u32| -> (Arc<RingContext>, KBasisSpec) {
                let order = ctx.order.min(cap);
                let c = RingContext::new(ctx.gens.clone(), order, ctx.max_cycle)
                    .expect("derived context")
                    .with_conductor(ctx.conductor);
                (c, world.basis.clone())
            };
            let (ctx2, basis2) = capped_engine(2);
            let engine2 = BracketEngine::new(&ctx2, &basis2, provider);
            let tau2 = default_tau(&ctx2, basis2.rank);
            let one2 = InsertionPoly::constant(KVector::basis(&ctx2, basis2.rank, 0), u32::MAX);
            let l2 = one2.add(&InsertionPoly::lm1(KVector::basis(&ctx2, basis2.rank, 0), u32::MAX));
            let mut wdvv = verify::VerifyReport::new("wdvv-symmetry");
            if let Some(f) = verify::check_wdvv_symmetry(&engine2, &tau2, &[one2.clone(), l2.clone(), one2.clone(), l2.clone()])? {
                wdvv.failures.push(f);
            }
            wdvv.checked += 1;
            suites.push(wdvv);
            let (ctx3, basis3) = capped_engine(3);
            let engine3 = BracketEngine::new(&ctx3, &basis3, provider);
            let tau3 = default_tau(&ctx3, basis3.rank);
            let one3 = InsertionPoly::constant(KVector::basis(&ctx3, basis3.rank, 0), u32::MAX);
            let lm13 = InsertionPoly::lm1(KVector::basis(&ctx3, basis3.rank, 0), u32::MAX);
            let l3 = one3.add(&lm13);
            let mut wdvv2 = verify::VerifyReport::new("wdvv-two-point");
            for (x, y) in [
                (qkt_core::rat::rat_int(2), qkt_core::rat::rat_int(3)),
                (qkt_core::rat::rat(1, 2), qkt_core::rat::rat_int(-2)),
            ] {
                if let Some(f) = verify::check_wdvv_two_point(&engine3, &tau3, 0, 0, &x, &y, ctx3.order.max(2) + 1)? {
                    wdvv2.failures.push(f);
                }
                wdvv2.checked += 1;
            }
            suites.push(wdvv2);
            let mut unstable = verify::VerifyReport::new("unstable-identities");
            let fails = verify::check_unstable_identities(&engine3, &tau3, &l3)?;
            unstable.checked += 3;
            unstable.failures.extend(fails);
            if let Some(f) = verify::check_unstable_tail_completion(
                &engine3,
                &tau3,
                &lm13.scale_series(&TruncatedSeries::generator(&ctx3, 0)),
            )? {
                unstable.failures.push(f);
            }
            unstable.checked += 1;
            suites.push(unstable);
            let failed: Vec<String> = suites
                .iter()
                .flat_map(|s| s.failures.iter().cloned())
                .collect();
            let value = json!({
                "suites": suites,
                "passed": failed.is_empty(),
            });
            if failed.is_empty() {
                Ok(value)
            } else {
                Err(EngineError::Verification(failed.join("; ")))
            }
        }
        Task::ReconstructG0 => {
            let input = r
                .input
                .as_ref()
                .ok_or_else(|| EngineError::Config("reconstruct-g0 needs --input".into()))?;
            let profile = qconfig::load_profile(input, ctx, world.basis.rank)?;
            let result = qkt_core::recon0::f0_assemble(&engine, &profile)?;
            Ok(json!({
                "F0": series_value(&result.value),
                "terms": {
                    "sector2": series_value(&result.term_sector2),
                    "quadratic": series_value(&result.term_quadratic),
                },
                "tau": family_value(&result.tau),
                "tbar": laurent_family_value(&result.tbar),
                "audit": {
                    "iterations": result.tau_audit.iterations,
                    "residual_weights": result.tau_audit.residual_weights,
                },
            }))
        }
        Task::ReconstructG1Point => {
            let input = r
                .input
                .as_ref()
                .ok_or_else(|| EngineError::Config("reconstruct-g1-point needs --input".into()))?;
            let tables = world
                .genus1
                .as_ref()
                .ok_or_else(|| EngineError::Config("reconstruct-g1-point needs --genus1-tables".into()))?;
            let profile = qconfig::load_profile(input, ctx, world.basis.rank)?;
            let result = qkt_core::recon1::f1_assemble(&engine, &profile, tables)?;
            let mut fperm = BTreeMap::new();
            for (m, v) in &result.fperm {
                fperm.insert(m.to_string(), series_value(v));
            }
            Ok(json!({
                "F1": series_value(&result.value),
                "terms": {
                    "F1_tau": series_value(&result.f1_tau),
                    "log_term": series_value(&result.log_term),
                    "ftw_new": series_value(&result.ftw_new),
                    "ftw_fake": series_value(&result.ftw_fake),
                    "fperm": fperm,
                },
                "tau": family_value(&result.tau),
            }))
        }
        Task::ConeCheck => {
            // tau from the input profile when given, else the default sample
            let tau = match &r.input {
                Some(p) => {
                    let profile = qconfig::load_profile(p, ctx, world.basis.rank)?;
                    let (tau, _) = qkt_core::recon0::solve_tau(&engine, &profile)?;
                    tau
                }
                None => default_tau(ctx, world.basis.rank),
            };
            let normalized = qkt_core::cone::cone_point_check(&engine, &tau)?;
            let family = qkt_core::cone::tangent_space_basis(&engine, &tau, r.cone_window)?;
            let iso = qkt_core::cone::isotropy_check(&engine, &family)?;
            let mut rulings = Vec::new();
            let mut all_passed = normalized.passed && iso.passed;
            let weight_one = TruncatedSeries::generator(ctx, 0);
            for k in -r.cone_window..=r.cone_window {
                let mut v: qkt_core::kbasis::KvFun = vec![QRat::zero(); world.basis.rank];
                v[0] = QRat::from_laurent(LaurentPoly::monomial(k, weight_one.clone()));
                let outcome = qkt_core::cone::ruling_check(&engine, &tau, &v)?;
                all_passed &= outcome.passed;
                rulings.push(json!({
                    "direction": format!("q^{}", k),
                    "passed": outcome.passed,
                    "detail": outcome.detail,
                }));
            }
            let value = json!({
                "cone_point": {"passed": normalized.passed, "detail": normalized.detail},
                "isotropy": {"passed": iso.passed, "detail": iso.detail},
                "rulings": rulings,
                "tangent_window": r.cone_window,
                "passed": all_passed,
            });
            if all_passed {
                Ok(value)
            } else {
                Err(EngineError::Verification("cone suite failed; see report".into()))
            }
        }
    }
}

fn emit_report(out: Option<&PathBuf>, report: &Value) {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Err(e) = std::fs::write(path, format!("{}\n", text)) {
            eprintln!("cannot write report {}: {}", path.display(), e);
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let resolved = match resolve(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("configuration error: {}", e);
            return ExitCode::from(4);
        }
    };
    let world = match load_world(&resolved) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("{}", e);
            return ExitCode::from(exit_code_for(&e));
        }
    };

    // provider stack: tables override the builtin
    let builtin = PointGenus0Builtin::new(&world.ctx);
    let mut layers: Vec<&dyn CorrelatorProvider> = Vec::new();
    for t in &world.tables {
        layers.push(t);
    }
    layers.push(&builtin);
    let composite = Composite { layers };
    let recording = Recording::new(&composite);

    // verification gate
    let gates = gate_reports(&world, &recording);
    let gate_passed = gates.iter().all(|g| g.passed());
    let gate_value = json!({
        "passed": gate_passed,
        "forced": resolved.force,
        "suites": gates,
    });
    let mut report = json!({
        "tool": {"name": "qkt", "version": env!("CARGO_PKG_VERSION")},
        "task": resolved.task.name(),
        "config": {
            "ring_context": resolved.ring_context.display().to_string(),
            "order": world.ctx.order,
            "max_cycle": world.ctx.max_cycle,
            "tables": world.tables.iter().map(|t| t.name.clone()).collect::<Vec<_>>(),
            "force": resolved.force,
        },
        "gate": gate_value,
    });
    if !gate_passed && !resolved.force {
        report["error"] = json!("table verification gate failed; rerun with --force to override");
        emit_report(resolved.out.as_ref(), &report);
        println!("{} FAILED: verification gate rejected the tables", resolved.task.name());
        return ExitCode::from(3);
    }

    match run_task(&world, &resolved, &recording) {
        Ok(result) => {
            report["result"] = result;
            report["audit"] = json!({
                "keys_touched": recording.keys_touched(),
                "eval_count": recording.eval_count(),
                "providers": recording.describe(),
            });
            emit_report(resolved.out.as_ref(), &report);
            println!("{} OK", resolved.task.name());
            ExitCode::SUCCESS
        }
        Err(e) => {
            report["error"] = json!(e.to_string());
            report["audit"] = json!({
                "keys_touched": recording.keys_touched(),
                "eval_count": recording.eval_count(),
            });
            emit_report(resolved.out.as_ref(), &report);
            eprintln!("{} FAILED: {}", resolved.task.name(), e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}
