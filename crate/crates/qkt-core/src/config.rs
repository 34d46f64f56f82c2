//! File formats: ring-context and basis declarations, series and profile
//! serialization, correlator tables (JSONL), and the genus-1 table bundle.
//!
//! All numbers are exact rationals rendered as `n` or `n/d` strings; series
//! records are sorted lexicographically on exponent vectors so identical
//! data always serializes byte-identically.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::correlator::{Coverage, Degree, FileTable, RawKey, SlotKey};
use crate::cyclotomic::RootLabel;
use crate::error::EngineError;
use crate::insertion::CycleType;
use crate::kbasis::{KBasisSpec, KVector};
use crate::qfun::{LaurentPoly, QRat};
use crate::rat::{rat_display, rat_parse, Rat};
use crate::recon0::Profile;
use crate::recon1::{Genus1Tables, PermBlock, PermRow};
use crate::sector::SectorFamily;
use crate::series::{AdamsRule, GeneratorSpec, RingContext, TruncatedSeries};

fn format_err(msg: impl Into<String>) -> EngineError {
    EngineError::Format(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> EngineError {
    EngineError::Config(format!("cannot read {}: {}", path.display(), e))
}

// ---------------------------------------------------------------- ring --

#[derive(Serialize, Deserialize)]
pub struct RingContextFile {
    pub generators: Vec<GeneratorSpec>,
    pub order: u32,
    pub max_cycle: u32,
    #[serde(default)]
    pub conductor: Option<u32>,
    /// Optional path (relative to this file) of the basis declaration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_spec: Option<String>,
}

pub fn load_ring_context(path: &Path) -> Result<(Arc<RingContext>, Option<std::path::PathBuf>), EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: RingContextFile =
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {}", path.display(), e)))?;
    let ctx = RingContext::new(file.generators, file.order, file.max_cycle)?;
    let ctx = match file.conductor {
        Some(c) => ctx.with_conductor(c),
        None => {
            // default: lcm of 1..=max_cycle
            let mut l = 1u32;
            for r in 1..=ctx.max_cycle {
                l = num_integer::lcm(l, r);
            }
            ctx.with_conductor(l)
        }
    };
    let basis_path = file
        .basis_spec
        .map(|rel| path.parent().unwrap_or(Path::new(".")).join(rel));
    Ok((ctx, basis_path))
}

// --------------------------------------------------------------- basis --

#[derive(Serialize, Deserialize)]
pub struct BasisFile {
    pub rank: usize,
    pub pairing: Vec<Vec<String>>,
    #[serde(default)]
    pub adams_on_basis: BTreeMap<String, Vec<Vec<String>>>,
}

fn parse_matrix(m: &[Vec<String>]) -> Result<Vec<Vec<Rat>>, EngineError> {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|s| rat_parse(s).ok_or_else(|| format_err(format!("bad rational `{}`", s))))
                .collect()
        })
        .collect()
}

pub fn load_basis(path: &Path) -> Result<KBasisSpec, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: BasisFile =
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {}", path.display(), e)))?;
    let pairing = parse_matrix(&file.pairing)?;
    if pairing.len() != file.rank {
        return Err(format_err("pairing size differs from declared rank"));
    }
    let mut adams = BTreeMap::new();
    for (k, m) in &file.adams_on_basis {
        let k: u32 = k.parse().map_err(|_| format_err("bad Adams index"))?;
        adams.insert(k, parse_matrix(m)?);
    }
    KBasisSpec::new(pairing, adams)
}

// -------------------------------------------------------------- series --

#[derive(Serialize, Deserialize, Clone)]
pub struct SeriesTerm {
    pub e: Vec<u16>,
    pub n: String,
    pub d: String,
}

#[derive(Serialize, Deserialize, Clone, Default)]
pub struct SeriesRecord {
    pub terms: Vec<SeriesTerm>,
}

pub fn series_to_record(s: &TruncatedSeries) -> SeriesRecord {
    SeriesRecord {
        terms: s
            .terms()
            .map(|(e, c)| SeriesTerm {
                e: e.clone(),
                n: c.numer().to_string(),
                d: c.denom().to_string(),
            })
            .collect(),
    }
}

pub fn series_from_record(rec: &SeriesRecord, ctx: &Arc<RingContext>) -> Result<TruncatedSeries, EngineError> {
    let mut out = TruncatedSeries::zero(ctx);
    for t in &rec.terms {
        if t.e.len() != ctx.rank_of_exponents() {
            return Err(format_err("series exponent vector length differs from the ring"));
        }
        let c = rat_parse(&format!("{}/{}", t.n, t.d))
            .ok_or_else(|| format_err(format!("bad rational {}/{}", t.n, t.d)))?;
        out = out.add(&TruncatedSeries::monomial(ctx, t.e.clone(), c));
    }
    Ok(out)
}

// ------------------------------------------------------------- profile --

#[derive(Serialize, Deserialize, Clone)]
pub struct LaurentTerm {
    pub q: i64,
    pub value: SeriesRecord,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct KvLaurentRecord {
    pub components: Vec<Vec<LaurentTerm>>,
}

#[derive(Serialize, Deserialize)]
pub struct ProfileFile {
    pub sectors: BTreeMap<String, KvLaurentRecord>,
}

pub fn load_profile(
    path: &Path,
    ctx: &Arc<RingContext>,
    rank: usize,
) -> Result<Profile, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ProfileFile =
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {}", path.display(), e)))?;
    let mut out = Profile::new(ctx.max_cycle);
    for (r, rec) in &file.sectors {
        let r: u32 = r.parse().map_err(|_| format_err("bad sector index"))?;
        if rec.components.len() != rank {
            return Err(format_err(format!(
                "sector {} has {} components; the basis has rank {}",
                r,
                rec.components.len(),
                rank
            )));
        }
        let mut kv = Vec::with_capacity(rank);
        for comp in &rec.components {
            let mut lp = LaurentPoly::zero();
            for term in comp {
                let c = series_from_record(&term.value, ctx)?;
                lp = lp.add(&LaurentPoly::monomial(term.q, c));
            }
            kv.push(lp);
        }
        out.set(r, kv);
    }
    // public boundary: enforce the sector-weight invariant
    if let Err((r, w)) = out.check_weights() {
        return Err(EngineError::Config(format!(
            "profile sector {} has filtration weight {}; sector entries must have weight >= their index",
            r, w
        )));
    }
    Ok(out)
}

pub fn profile_to_file(t: &Profile) -> ProfileFile {
    let mut sectors = BTreeMap::new();
    for (r, kv) in t.sectors() {
        let rec = KvLaurentRecord {
            components: kv
                .iter()
                .map(|lp| {
                    lp.terms
                        .iter()
                        .map(|(q, c)| LaurentTerm { q: *q, value: series_to_record(c) })
                        .collect()
                })
                .collect(),
        };
        sectors.insert(r.to_string(), rec);
    }
    ProfileFile { sectors }
}

// ---------------------------------------------------- correlator table --

#[derive(Serialize, Deserialize)]
pub struct TableHeader {
    pub format: String,
    pub version: u32,
    /// `correlator` (with the cycle normalization included) or `supertrace`.
    pub normalization: String,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub coverage: Vec<CoverageRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct CoverageRecord {
    pub g: u32,
    pub cycles: String,
    pub max_points: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_lm1: Option<u32>,
    #[serde(default)]
    pub degrees: Vec<BTreeMap<String, u16>>,
}

#[derive(Serialize, Deserialize)]
pub struct SlotRecord {
    pub cycle: u32,
    pub lm1_power: u32,
    pub basis: usize,
    /// Optional rational coefficient folded into the value at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct RowRecord {
    pub g: u32,
    #[serde(default)]
    pub degree: BTreeMap<String, u16>,
    pub slots: Vec<SlotRecord>,
    pub value: SeriesRecord,
}

pub fn load_correlator_table(path: &Path, ctx: &Arc<RingContext>) -> Result<FileTable, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines
        .next()
        .ok_or_else(|| format_err(format!("{}: empty table", path.display())))?;
    let header: TableHeader = serde_json::from_str(header_line)
        .map_err(|e| format_err(format!("{} header: {}", path.display(), e)))?;
    if header.format != "qkt-correlators" {
        return Err(format_err(format!("{}: not a correlator table", path.display())));
    }
    let supertrace = match header.normalization.as_str() {
        "correlator" => false,
        "supertrace" => true,
        other => return Err(format_err(format!("unknown normalization `{}`", other))),
    };
    let mut values = BTreeMap::new();
    let mut degrees: std::collections::BTreeSet<Degree> = Default::default();
    degrees.insert(Degree::new());
    for line in lines {
        let row: RowRecord = serde_json::from_str(line)
            .map_err(|e| format_err(format!("{} row: {}", path.display(), e)))?;
        let mut value = series_from_record(&row.value, ctx)?;
        let mut slots = Vec::with_capacity(row.slots.len());
        for s in &row.slots {
            if let Some(c) = &s.coeff {
                let c = rat_parse(c).ok_or_else(|| format_err(format!("bad coefficient `{}`", c)))?;
                value = value.scale(&c);
            }
            slots.push(SlotKey { cycle: s.cycle, lm1_power: s.lm1_power, basis: s.basis });
        }
        let key = RawKey::new(row.g, row.degree.clone(), slots);
        if supertrace {
            value = crate::correlator::supertrace_to_correlator(&value, &key.cycle_type());
        }
        degrees.insert(row.degree);
        if values.insert(key.clone(), value).is_some() {
            return Err(format_err(format!("duplicate row for key {}", key.canonical_string())));
        }
    }
    let mut coverage = Vec::new();
    for c in &header.coverage {
        let degs = if c.degrees.is_empty() { vec![Degree::new()] } else { c.degrees.clone() };
        for d in &degs {
            degrees.insert(d.clone());
        }
        let mut cov = Coverage::parse_cycles(c.g, &c.cycles, c.max_points, degs)?;
        cov.max_lm1 = c.max_lm1;
        coverage.push(cov);
    }
    Ok(FileTable {
        name: path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into()),
        ctx: ctx.clone(),
        values,
        coverage,
        degree_list: degrees.into_iter().collect(),
        provenance: header.provenance,
    })
}

// ------------------------------------------------------ genus-1 bundle --

#[derive(Serialize, Deserialize)]
pub struct G1File {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub provenance: String,
    pub fake: Vec<FakeRecord>,
    pub perm: Vec<PermBlockRecord>,
    /// Path, relative to this file, of the pure-tau genus-1 correlator table.
    pub f1_tau: String,
}

/// One fake one-point function: Laurent part plus principal parts at x = 1.
#[derive(Serialize, Deserialize)]
pub struct FakeRecord {
    pub points: u32,
    #[serde(default)]
    pub laurent: Vec<(i64, String)>,
    /// coefficient of (1 - x)^{-s} at index s-1
    #[serde(default)]
    pub pole_one: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct PermBlockRecord {
    pub m: u32,
    pub rows: Vec<PermRowRecord>,
}

#[derive(Serialize, Deserialize)]
pub struct PermRowRecord {
    pub ell: u32,
    #[serde(default)]
    pub trailing_dilaton: bool,
    pub den_pow: u32,
    /// numerator Laurent polynomial in x with series coefficients
    pub num: Vec<LaurentTerm>,
}

pub fn load_genus1_tables(path: &Path, ctx: &Arc<RingContext>) -> Result<Genus1Tables, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: G1File =
        serde_json::from_str(&text).map_err(|e| format_err(format!("{}: {}", path.display(), e)))?;
    if file.format != "qkt-genus1" {
        return Err(format_err(format!("{}: not a genus-1 bundle", path.display())));
    }
    let mut fake = vec![QRat::zero(); 4];
    for rec in &file.fake {
        if !(1..=4).contains(&rec.points) {
            return Err(format_err("fake table points must lie in 1..=4"));
        }
        let mut f: QRat<TruncatedSeries> = QRat::zero();
        for (q, c) in &rec.laurent {
            let c = rat_parse(c).ok_or_else(|| format_err(format!("bad rational `{}`", c)))?;
            f = f.add(&QRat::from_laurent(LaurentPoly::monomial(*q, TruncatedSeries::from_rat(ctx, c))));
        }
        for (i, c) in rec.pole_one.iter().enumerate() {
            let c = rat_parse(c).ok_or_else(|| format_err(format!("bad rational `{}`", c)))?;
            f = f.add(&QRat::pole_term(RootLabel::one(), i as u32 + 1, TruncatedSeries::from_rat(ctx, c)));
        }
        fake[rec.points as usize - 1] = f;
    }
    let mut perm = BTreeMap::new();
    for block in &file.perm {
        if ![2u32, 3, 4, 6].contains(&block.m) {
            return Err(format_err("permutation sectors are M in {2,3,4,6}"));
        }
        let mut rows = Vec::new();
        for r in &block.rows {
            let mut num = LaurentPoly::zero();
            for term in &r.num {
                let c = series_from_record(&term.value, ctx)?;
                num = num.add(&LaurentPoly::monomial(term.q, c));
            }
            rows.push(PermRow { ell: r.ell, trailing_dilaton: r.trailing_dilaton, den_pow: r.den_pow, num });
        }
        perm.insert(block.m, PermBlock { rows });
    }
    let f1_path = path.parent().unwrap_or(Path::new(".")).join(&file.f1_tau);
    let f1_tau = load_correlator_table(&f1_path, ctx)?;
    Ok(Genus1Tables { fake, perm, f1_tau, provenance: file.provenance })
}

// ------------------------------------------------------------ rendering --

/// Deterministic text form of a rational function of q with series
/// coefficients, for golden files.
pub fn render_qrat(f: &QRat<TruncatedSeries>) -> String {
    f.render(|s| format!("{}", s))
}

pub fn render_series(s: &TruncatedSeries) -> String {
    format!("{}", s)
}

/// Canonical JSON for a series (used inside reports).
pub fn series_json(s: &TruncatedSeries) -> serde_json::Value {
    serde_json::to_value(series_to_record(s)).expect("series serializes")
}

// A few consumers want raw display of rationals.
pub fn rat_string(r: &Rat) -> String {
    rat_display(r)
}

/// Writes a correlator-table JSONL file deterministically (header + sorted
/// rows); used by the fixture generators and round-trip tests.
pub fn write_correlator_table(
    path: &Path,
    header: &TableHeader,
    rows: &[RowRecord],
) -> Result<(), EngineError> {
    let mut out = serde_json::to_string(header).map_err(|e| format_err(e.to_string()))?;
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| format_err(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Builds a sector family of constant K-vectors from a profile-style record
/// (used for tau overrides in the cone task).
pub fn constant_family_from_profile(t: &Profile, ctx: &Arc<RingContext>) -> SectorFamily<KVector> {
    t.map(|_, kv| crate::recon0::kv_laurent_at_one(kv, ctx))
}

/// Round-trips a cycle type through its text form (used by format tests).
pub fn cycle_type_round_trip(s: &str) -> Result<String, EngineError> {
    Ok(format!("{}", CycleType::parse(s)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    fn ctx() -> Arc<RingContext> {
        RingContext::new(
            vec![GeneratorSpec { name: "s".into(), weight: 1, adams_rule: AdamsRule::Fixed }],
            3,
            4,
        )
        .unwrap()
    }

    #[test]
    fn series_record_round_trip() {
        let c = ctx();
        let s = TruncatedSeries::monomial(&c, vec![2], rat(3, 7))
            .add(&TruncatedSeries::monomial(&c, vec![0], rat(-1, 2)));
        let rec = series_to_record(&s);
        let back = series_from_record(&rec, &c).unwrap();
        assert_eq!(s, back);
        // deterministic: serializing twice is byte-identical
        let a = serde_json::to_string(&rec).unwrap();
        let b = serde_json::to_string(&series_to_record(&back)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn table_round_trip() {
        let c = ctx();
        let dir = std::env::temp_dir().join("qkt-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.jsonl");
        let header = TableHeader {
            format: "qkt-correlators".into(),
            version: 1,
            normalization: "supertrace".into(),
            provenance: "test".into(),
            coverage: vec![CoverageRecord {
                g: 0,
                cycles: "permutative".into(),
                max_points: 8,
                max_lm1: None,
                degrees: vec![],
            }],
        };
        let rows = vec![RowRecord {
            g: 0,
            degree: BTreeMap::new(),
            slots: vec![
                SlotRecord { cycle: 2, lm1_power: 0, basis: 0, coeff: None },
                SlotRecord { cycle: 1, lm1_power: 0, basis: 0, coeff: None },
                SlotRecord { cycle: 1, lm1_power: 0, basis: 0, coeff: None },
            ],
            value: series_to_record(&TruncatedSeries::from_rat(&c, rat(1, 1))),
        }];
        write_correlator_table(&path, &header, &rows).unwrap();
        let table = load_correlator_table(&path, &c).unwrap();
        // supertrace values are divided by the cycle normalization 2
        let key = RawKey::new(
            0,
            Degree::new(),
            vec![
                SlotKey { cycle: 2, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
            ],
        );
        use crate::correlator::CorrelatorProvider;
        assert_eq!(table.eval(&key).unwrap().constant_term(), rat(1, 2));
        // covered but absent: zero
        let key2 = RawKey::new(
            0,
            Degree::new(),
            vec![
                SlotKey { cycle: 2, lm1_power: 1, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
                SlotKey { cycle: 1, lm1_power: 0, basis: 0 },
            ],
        );
        assert!(table.eval(&key2).unwrap().is_zero());
        // uncovered: data incomplete
        let key3 = RawKey::new(1, Degree::new(), vec![SlotKey { cycle: 1, lm1_power: 0, basis: 0 }]);
        assert!(table.eval(&key3).is_err());
    }
}
