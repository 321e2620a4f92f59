//! Report assembly and rendering.
//!
//! A report is built as a `serde_json::Value` tree whose objects are
//! BTreeMap-backed, so JSON output always has sorted keys. Every real
//! number is rendered through [`fmt_real`] — scientific notation with 15
//! significant digits — in both formats, making reports byte-identical
//! across runs for identical inputs and flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ccq_core::config::{
    block_spectrum, q_polynomial_check, synthesize_basis, validate_config,
    verify_basis, verify_parameter_identities, BasisReport, BlockSpectrum, CoherentConfig,
    IdentityReport, QccVerdict,
};
use ccq_core::construct::{ConditionCertificate, Construction, SphericalFamilyProfile};
use ccq_core::matlin::{RealMatrix, Tolerance};
use ccq_core::scheme::RelationPartition;
use ccq_core::Result;
use serde_json::{json, Map, Value};

/// Version tag of the structured report layout.
pub const SCHEMA: &str = "ccq/1";

/// Scientific notation with 15 significant digits; negative zero is
/// normalized so equal values always render identically.
pub fn fmt_real(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.14e}")
}

/// Provenance of the analyzed object, echoed at the top of every report.
#[derive(Clone, Debug)]
pub struct ReportMeta {
    /// Canonical form of the subcommand that produced the report.
    pub command: String,
    /// `file:<path>`, `catalog:<name>`, or `construct`.
    pub source: String,
    /// `sha256:` + hex digest of the input artifact (file bytes, or the
    /// canonical partition emission for constructed and catalog objects).
    pub digest: String,
    pub tol: f64,
}

/// Everything a full report draws from.
pub struct Analysis {
    pub config: CoherentConfig,
    pub basis_report: BasisReport,
    pub spectrum: BlockSpectrum,
    /// Absent when the run skips the Q-polynomial property check.
    pub verdict: Option<QccVerdict>,
    pub identities: Vec<IdentityReport>,
    pub certificate: Option<ConditionCertificate>,
    pub profile: Option<SphericalFamilyProfile>,
    pub construction_residuals: BTreeMap<String, f64>,
}

impl Analysis {
    pub fn identities_pass(&self) -> bool {
        self.identities.iter().all(|r| r.pass)
    }
}

fn assemble(
    config: CoherentConfig,
    basis: &ccq_core::config::BlockBasis,
    extras: Option<(ConditionCertificate, Option<SphericalFamilyProfile>, BTreeMap<String, f64>)>,
    with_qpoly: bool,
    search: bool,
    tol: Tolerance,
) -> Result<Analysis> {
    let basis_report = verify_basis(&config, basis, tol)?;
    let spectrum = block_spectrum(&config, basis, tol)?;
    let verdict = if with_qpoly {
        Some(q_polynomial_check(&config, basis, &spectrum, search, tol)?)
    } else {
        None
    };
    let identities = verify_parameter_identities(&config, basis, &spectrum, tol);
    let (certificate, profile, construction_residuals) = match extras {
        Some((c, p, r)) => (Some(c), p, r),
        None => (None, None, BTreeMap::new()),
    };
    Ok(Analysis {
        config,
        basis_report,
        spectrum,
        verdict,
        identities,
        certificate,
        profile,
        construction_residuals,
    })
}

/// Validates a partition, synthesizes its basis, and runs the full
/// analysis. `with_qpoly` controls whether the Q-polynomial property check
/// runs; `search` lets that check try idempotent reorderings.
pub fn analyze_partition(
    part: &RelationPartition,
    with_qpoly: bool,
    search: bool,
    tol: Tolerance,
) -> Result<Analysis> {
    let config = validate_config(part)?;
    let basis = synthesize_basis(&config, tol)?;
    assemble(config, &basis, None, with_qpoly, search, tol)
}

/// Analyzes a finished construction, carrying its certificate, profile,
/// and verified-identity residuals into the report.
pub fn analyze_construction(c: Construction, search: bool, tol: Tolerance) -> Result<Analysis> {
    let Construction {
        config,
        basis,
        certificate,
        profile,
        residuals,
    } = c;
    assemble(
        config,
        &basis,
        Some((certificate, profile, residuals)),
        true,
        search,
        tol,
    )
}

// ---------------------------------------------------------------------------
// JSON assembly
// ---------------------------------------------------------------------------

fn real_matrix_value(m: &RealMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|r| {
                Value::Array(
                    (0..m.cols())
                        .map(|c| Value::String(fmt_real(m.get(r, c))))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn meta_entries(meta: &ReportMeta, out: &mut Map<String, Value>) {
    out.insert("schema".into(), json!(SCHEMA));
    out.insert(
        "tool".into(),
        json!({"name": "ccq", "version": env!("CARGO_PKG_VERSION")}),
    );
    out.insert(
        "input".into(),
        json!({
            "command": meta.command,
            "source": meta.source,
            "digest": meta.digest,
            "tolerance": fmt_real(meta.tol),
        }),
    );
}

fn structure_value(cfg: &CoherentConfig) -> Value {
    let fibers: Vec<usize> = (0..cfg.num_fibers()).map(|i| cfg.fiber_size(i)).collect();
    json!({
        "points": cfg.n(),
        "fibers": fibers,
        "type_matrix": cfg.type_matrix(),
    })
}

fn basis_value(b: &BasisReport) -> Value {
    json!({
        "b1_residual": fmt_real(b.b1_residual),
        "b2_residual": fmt_real(b.b2_residual),
        "b3_residual": fmt_real(b.b3_residual),
        "b4_residual": fmt_real(b.b4_residual),
        "pass": b.pass,
    })
}

fn blocks_value(spec: &BlockSpectrum) -> Value {
    Value::Array(
        spec.blocks
            .iter()
            .map(|(&(i, j), d)| {
                let krein: Vec<Value> = d.krein.iter().map(real_matrix_value).collect();
                json!({
                    "block": [i, j],
                    "first_index": d.eps,
                    "index_count": d.multiplicities.len(),
                    "multiplicities": d.multiplicities,
                    "p_matrix": real_matrix_value(&d.p_matrix),
                    "q_matrix": real_matrix_value(&d.q_matrix),
                    "krein": krein,
                    "expansion_residual": fmt_real(d.max_expansion_residual),
                })
            })
            .collect(),
    )
}

fn qpoly_value(v: &QccVerdict) -> Value {
    let blocks: Vec<Value> = v
        .blocks
        .iter()
        .map(|(&(i, j), b)| {
            json!({
                "block": [i, j],
                "tridiag_residual": fmt_real(b.tridiag_residual),
                "min_band": fmt_real(b.min_band),
                "cond1_residual": fmt_real(b.cond1_residual),
                "cond2_residual": fmt_real(b.cond2_residual),
                "cond1_pass": b.cond1_pass,
                "cond2_pass": b.cond2_pass,
                "cond3_pass": b.cond3_pass,
            })
        })
        .collect();
    json!({
        "verdict": v.is_q_polynomial,
        "ordering": v.ordering,
        "orderings_tried": v.orderings_tried,
        "truncated_search": v.truncated_search,
        "conditions_agree": v.conditions_agree,
        "best_violation": fmt_real(v.best_violation),
        "blocks": blocks,
    })
}

fn certificate_value(c: &ConditionCertificate) -> Value {
    let checks: Vec<Value> = c
        .checks
        .iter()
        .map(|k| {
            json!({
                "name": k.name,
                "lhs": fmt_real(k.lhs),
                "rhs": fmt_real(k.rhs),
                "pass": k.pass,
            })
        })
        .collect();
    let branches: Map<String, Value> = c
        .branches
        .iter()
        .map(|(&i, &b)| (i.to_string(), json!(b)))
        .collect();
    json!({"pass": c.pass, "checks": checks, "branches": branches})
}

fn profile_value(p: &SphericalFamilyProfile) -> Value {
    let angle_blocks: Vec<Value> = p
        .angle_sets
        .iter()
        .map(|(&(i, j), angles)| {
            let formatted: Vec<String> = angles.iter().map(|&a| fmt_real(a)).collect();
            json!({
                "block": [i, j],
                "degree": p.degrees.get(&(i, j)).copied().unwrap_or(angles.len()),
                "angles": formatted,
            })
        })
        .collect();
    let special: Vec<Value> = p
        .special_coefficients
        .iter()
        .map(|(&i, &c)| json!({"fiber": i, "coefficient": fmt_real(c)}))
        .collect();
    json!({
        "strengths": p.strengths,
        "antipodal": p.antipodal,
        "angle_sets": angle_blocks,
        "special_coefficients": special,
    })
}

fn identities_value(rows: &[IdentityReport]) -> Value {
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "id": r.name,
                "tuples": r.tuples,
                "max_residual": fmt_real(r.max_residual),
                "exact": r.exact,
                "pass": r.pass,
            })
        })
        .collect();
    json!({"pass": rows.iter().all(|r| r.pass), "table": table})
}

/// Full structured report of an analysis.
pub fn report_value(meta: &ReportMeta, a: &Analysis) -> Value {
    let mut out = Map::new();
    meta_entries(meta, &mut out);
    out.insert("structure".into(), structure_value(&a.config));
    out.insert("basis".into(), basis_value(&a.basis_report));
    out.insert("blocks".into(), blocks_value(&a.spectrum));
    out.insert("min_krein".into(), json!(fmt_real(a.spectrum.min_krein)));
    out.insert(
        "q_polynomial".into(),
        match &a.verdict {
            Some(v) => qpoly_value(v),
            None => Value::Null,
        },
    );
    out.insert(
        "certificate".into(),
        match &a.certificate {
            Some(c) => certificate_value(c),
            None => Value::Null,
        },
    );
    out.insert(
        "spherical_profile".into(),
        match &a.profile {
            Some(p) => profile_value(p),
            None => Value::Null,
        },
    );
    let cchecks: Map<String, Value> = a
        .construction_residuals
        .iter()
        .map(|(k, &v)| (k.clone(), json!(fmt_real(v))))
        .collect();
    out.insert("construction_checks".into(), Value::Object(cchecks));
    out.insert("identities".into(), identities_value(&a.identities));
    Value::Object(out)
}

/// Small report for a bare axiom validation (no basis or spectrum).
pub fn validation_value(meta: &ReportMeta, cfg: &CoherentConfig) -> Value {
    let mut out = Map::new();
    meta_entries(meta, &mut out);
    out.insert("structure".into(), structure_value(cfg));
    out.insert("verdict".into(), json!("valid coherent configuration"));
    Value::Object(out)
}

/// JSON with sorted keys, two-space indentation, trailing newline.
pub fn render_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report tree serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Text rendering
// ---------------------------------------------------------------------------

fn push_aligned(out: &mut String, indent: &str, cells: &[Vec<String>]) {
    let width = cells
        .iter()
        .flat_map(|r| r.iter().map(String::len))
        .max()
        .unwrap_or(0);
    for row in cells {
        out.push_str(indent);
        for (k, c) in row.iter().enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
    }
}

fn real_matrix_text(out: &mut String, indent: &str, m: &RealMatrix) {
    let cells: Vec<Vec<String>> = (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| fmt_real(m.get(r, c))).collect())
        .collect();
    push_aligned(out, indent, &cells);
}

fn pass_str(p: bool) -> &'static str {
    if p {
        "PASS"
    } else {
        "FAIL"
    }
}

fn meta_text(out: &mut String, meta: &ReportMeta) {
    let _ = writeln!(out, "ccq {} (schema {SCHEMA})", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "command:   {}", meta.command);
    let _ = writeln!(out, "source:    {}", meta.source);
    let _ = writeln!(out, "digest:    {}", meta.digest);
    let _ = writeln!(out, "tolerance: {}", fmt_real(meta.tol));
}

fn structure_text(out: &mut String, cfg: &CoherentConfig) {
    let fibers: Vec<String> = (0..cfg.num_fibers())
        .map(|i| cfg.fiber_size(i).to_string())
        .collect();
    let _ = writeln!(
        out,
        "\npoints: {}   fibers: {}",
        cfg.n(),
        fibers.join(" ")
    );
    let _ = writeln!(out, "type matrix:");
    let cells: Vec<Vec<String>> = cfg
        .type_matrix()
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect())
        .collect();
    push_aligned(out, "  ", &cells);
}

/// Text rendering of a bare validation report.
pub fn validation_text(meta: &ReportMeta, cfg: &CoherentConfig) -> String {
    let mut out = String::new();
    meta_text(&mut out, meta);
    structure_text(&mut out, cfg);
    out.push_str("\nverdict: valid coherent configuration\n");
    out
}

/// Text rendering of a full analysis report; same content as the JSON
/// form, laid out for reading.
pub fn analysis_text(meta: &ReportMeta, a: &Analysis) -> String {
    let mut out = String::new();
    meta_text(&mut out, meta);
    structure_text(&mut out, &a.config);

    let b = &a.basis_report;
    let _ = writeln!(
        out,
        "\nbasis residuals: b1={} b2={} b3={} b4={}  {}",
        fmt_real(b.b1_residual),
        fmt_real(b.b2_residual),
        fmt_real(b.b3_residual),
        fmt_real(b.b4_residual),
        pass_str(b.pass)
    );

    for (&(i, j), d) in &a.spectrum.blocks {
        let mults: Vec<String> = d.multiplicities.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(
            out,
            "\nblock ({i},{j})  indices {}..{}  multiplicities {}",
            d.eps,
            d.eps + d.multiplicities.len() - 1,
            mults.join(" ")
        );
        let _ = writeln!(out, "  P:");
        real_matrix_text(&mut out, "    ", &d.p_matrix);
        let _ = writeln!(out, "  Q:");
        real_matrix_text(&mut out, "    ", &d.q_matrix);
        for (l, k) in d.krein.iter().enumerate() {
            let _ = writeln!(out, "  krein L_{l}:");
            real_matrix_text(&mut out, "    ", k);
        }
        let _ = writeln!(
            out,
            "  expansion residual: {}",
            fmt_real(d.max_expansion_residual)
        );
    }
    let _ = writeln!(out, "\nmin krein parameter: {}", fmt_real(a.spectrum.min_krein));

    if let Some(v) = &a.verdict {
        let ordering = match &v.ordering {
            Some(ord) => ord
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            None => "none".into(),
        };
        let _ = writeln!(
            out,
            "\nq-polynomial: {}  (ordering: {ordering}; {} ordering(s) tried{}; conditions {})",
            if v.is_q_polynomial { "TRUE" } else { "FALSE" },
            v.orderings_tried,
            if v.truncated_search {
                ", search truncated"
            } else {
                ""
            },
            if v.conditions_agree {
                "agree"
            } else {
                "DISAGREE"
            }
        );
        let _ = writeln!(out, "  best violation: {}", fmt_real(v.best_violation));
        for (&(i, j), bv) in &v.blocks {
            let _ = writeln!(
                out,
                "  block ({i},{j}): cond1={} [{}]  cond2={} [{}]  cond3 [{}]  tridiag={}  min-band={}",
                fmt_real(bv.cond1_residual),
                pass_str(bv.cond1_pass),
                fmt_real(bv.cond2_residual),
                pass_str(bv.cond2_pass),
                pass_str(bv.cond3_pass),
                fmt_real(bv.tridiag_residual),
                fmt_real(bv.min_band),
            );
        }
    }

    if let Some(c) = &a.certificate {
        let _ = writeln!(out, "\ncertificate: {}", pass_str(c.pass));
        for k in &c.checks {
            let _ = writeln!(
                out,
                "  {}: {} vs {}  {}",
                k.name,
                fmt_real(k.lhs),
                fmt_real(k.rhs),
                pass_str(k.pass)
            );
        }
        for (i, b) in &c.branches {
            let _ = writeln!(out, "  branch {i}: {b}");
        }
    }

    if let Some(p) = &a.profile {
        let strengths: Vec<String> = p.strengths.iter().map(|s| s.to_string()).collect();
        let anti: Vec<String> = p
            .antipodal
            .iter()
            .map(|&x| if x { "yes".into() } else { "no".to_string() })
            .collect();
        let _ = writeln!(
            out,
            "\nspherical profile: strengths {}; antipodal {}",
            strengths.join(" "),
            anti.join(" ")
        );
        for (&(i, j), angles) in &p.angle_sets {
            let fm: Vec<String> = angles.iter().map(|&x| fmt_real(x)).collect();
            let _ = writeln!(
                out,
                "  angles ({i},{j}) [degree {}]: {}",
                p.degrees.get(&(i, j)).copied().unwrap_or(angles.len()),
                fm.join("  ")
            );
        }
        for (&i, &c) in &p.special_coefficients {
            let _ = writeln!(out, "  special coefficient, fiber {i}: {}", fmt_real(c));
        }
    }

    if !a.construction_residuals.is_empty() {
        let _ = writeln!(out, "\nconstruction checks:");
        let wid = a
            .construction_residuals
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0);
        for (k, &v) in &a.construction_residuals {
            let _ = writeln!(out, "  {k:<wid$}  {}", fmt_real(v));
        }
    }

    let _ = writeln!(
        out,
        "\nidentity suite: {} ({} identities)",
        pass_str(a.identities_pass()),
        a.identities.len()
    );
    let wid = a.identities.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &a.identities {
        let _ = writeln!(
            out,
            "  {:<wid$}  tuples {:>8}  max {:>22}  {}{}",
            r.name,
            r.tuples,
            fmt_real(r.max_residual),
            if r.exact { "exact  " } else { "real   " },
            pass_str(r.pass)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccq_core::catalog::hamming_partition;

    #[test]
    fn real_formatting_is_fixed_width_scientific() {
        assert_eq!(fmt_real(1.0), "1.00000000000000e0");
        assert_eq!(fmt_real(-0.0), "0.00000000000000e0");
        assert_eq!(fmt_real(0.5), "5.00000000000000e-1");
        let x = 1.0 / 3.0;
        let back: f64 = fmt_real(x).parse().unwrap();
        assert!((back - x).abs() <= 1e-15 * x.abs());
    }

    #[test]
    fn json_reports_have_sorted_keys_and_are_reproducible() {
        let part = hamming_partition(2, 2).unwrap();
        let tol = Tolerance::default();
        let meta = ReportMeta {
            command: "analyze h22".into(),
            source: "catalog:hamming:2,2".into(),
            digest: "sha256:test".into(),
            tol: tol.abs_eps,
        };
        let a = analyze_partition(&part, true, false, tol).unwrap();
        let v1 = render_json(&report_value(&meta, &a));
        let a2 = analyze_partition(&part, true, false, tol).unwrap();
        let v2 = render_json(&report_value(&meta, &a2));
        assert_eq!(v1, v2);
        // Top-level keys arrive alphabetically.
        let top: Vec<&str> = v1
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.split('"').nth(1).unwrap())
            .collect();
        let mut sorted = top.clone();
        sorted.sort_unstable();
        assert_eq!(top, sorted);
        // Text rendering is reproducible too.
        assert_eq!(analysis_text(&meta, &a), analysis_text(&meta, &a2));
    }
}
