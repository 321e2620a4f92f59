//! Command-line front end: argument grammar, dispatch, exit codes.
//!
//! Exit contract: 0 when the run succeeds and any verdict is positive,
//! 2 when the input is well-formed but the verdict is negative (the
//! Q-polynomial property fails, an admissibility certificate fails, or the
//! identity suite finds a violation), 1 for input or usage errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ccq_core::catalog::{
    emit_object, emit_partition_str, entries, lookup, mub_r4_bases, parse_code_str,
    parse_partition_str, parse_pointset_str, CatalogObject, Code,
};
use ccq_core::config::{restrict_basis_to_fibers, restrict_to_fibers, validate_config};
use ccq_core::construct::{
    delsarte_union, derived_designs, mub_config, nth_power, restrict_in_fibers, spherical_union,
    terwilliger_h_n_2, Construction, PointSet,
};
use ccq_core::matlin::Tolerance;
use ccq_core::scheme::RelationPartition;
use ccq_core::CcqError;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::formats;
use crate::report::{
    self, analysis_text, analyze_construction, analyze_partition, render_json, report_value,
    validation_text, validation_value, Analysis, ReportMeta,
};

#[derive(Parser, Debug)]
#[command(
    name = "ccq",
    version,
    about = "Construct, validate, and analyze Q-polynomial coherent configurations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Numerical tolerance for residual checks.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Try idempotent reorderings when the given order fails the
    /// tridiagonal test.
    #[arg(long, global = true)]
    search_ordering: bool,

    /// Worker threads; affects speed only, never report content.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check the coherent-configuration axioms of a partition file.
    Validate { file: PathBuf },
    /// Full analysis of a partition file: basis, block spectra,
    /// Q-polynomial verdict, parameter-identity suite.
    Analyze { file: PathBuf },
    /// Build a configuration and analyze it.
    #[command(subcommand)]
    Construct(ConstructCmd),
    /// List built-in objects or emit one in its file format.
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Run the parameter-identity suite on a partition file or catalog
    /// name and report the residual table.
    AppendixCheck { input: String },
}

#[derive(Subcommand, Debug)]
enum ConstructCmd {
    /// Tensor power of an association scheme.
    Power {
        /// Partition file or catalog name of the base scheme.
        #[arg(long)]
        scheme: String,
        /// Number of tensor factors.
        #[arg(long)]
        copies: usize,
    },
    /// Disjoint union of designs inside a Q-polynomial association scheme.
    Delsarte {
        /// Partition file or catalog name of the ambient scheme.
        #[arg(long)]
        scheme: String,
        /// Code file or catalog name; repeat once per fiber.
        #[arg(long = "code")]
        codes: Vec<String>,
        /// Explicit point subset as comma-separated indices; repeatable,
        /// appended after any --code fibers.
        #[arg(long = "subset")]
        subsets: Vec<String>,
    },
    /// Union of spherical designs on a common unit sphere.
    Sphere {
        /// Point-set files, one per fiber.
        #[arg(long, num_args = 1.., value_name = "FILE")]
        fibers: Vec<PathBuf>,
        /// Point-set file or catalog name whose derived designs (slices
        /// through a base point) become the fibers.
        #[arg(long, conflicts_with = "fibers")]
        derive: Option<String>,
        /// Base point index for --derive.
        #[arg(long, default_value_t = 0)]
        base_index: usize,
    },
    /// The configuration of three pairwise-unbiased bases of R^4 (24
    /// signed vectors), derived at a base vector.
    Mub {
        /// Index of the base vector in the 24-point set.
        #[arg(long, default_value_t = 0)]
        base_index: usize,
    },
    /// Shell-block configuration of the n-cube {0,1}^n with its harmonic
    /// block basis.
    Terwilliger {
        #[arg(long)]
        n: usize,
    },
    /// Restriction of the n-cube shell configuration to designs inside
    /// chosen shells.
    Restrict {
        /// Cube dimension.
        #[arg(long)]
        n: usize,
        /// Comma-separated shell weights to keep, strictly ascending.
        #[arg(long)]
        shells: String,
        /// Code file or catalog name per kept shell, in shell order; each
        /// word must have the matching weight.
        #[arg(long = "code")]
        codes: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogCmd {
    /// List every built-in object.
    List,
    /// Emit a built-in object in its file format.
    Emit { name: String },
}

/// A failed run: `Input` exits 1, `Verdict` exits 2.
enum Failure {
    Input(String),
    Verdict(String),
}

impl From<CcqError> for Failure {
    fn from(e: CcqError) -> Self {
        match e {
            CcqError::Certificate(_) => Failure::Verdict(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn input_fail(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

/// Parses argv and runs one invocation, writing the report to `out` (or
/// `--out`) and diagnostics to `err`; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{rendered}");
                0
            } else {
                let _ = write!(err, "{rendered}");
                1
            };
        }
    };
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        let _ = writeln!(err, "error: --tol must be a positive finite number");
        return 1;
    }
    match dispatch(&cli) {
        Ok((text, code)) => {
            if let Some(path) = &cli.out {
                if let Err(e) = formats::write_file(path, &text) {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            code
        }
        Err(Failure::Input(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
        Err(Failure::Verdict(m)) => {
            let _ = writeln!(err, "verdict: {m}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(String, i32), Failure> {
    let tol = Tolerance { abs_eps: cli.tol };
    match &cli.cmd {
        Cmd::Validate { file } => {
            let text = formats::read_file(file)?;
            let part = parse_partition_str(&text)?;
            let cfg = validate_config(&part)?;
            let meta = ReportMeta {
                command: with_search(format!("validate {}", file.display()), cli),
                source: format!("file:{}", file.display()),
                digest: format!("sha256:{}", formats::sha256_hex(text.as_bytes())),
                tol: cli.tol,
            };
            let rendered = match cli.format {
                Format::Text => validation_text(&meta, &cfg),
                Format::Json => render_json(&validation_value(&meta, &cfg)),
            };
            Ok((rendered, 0))
        }
        Cmd::Analyze { file } => {
            let text = formats::read_file(file)?;
            let part = parse_partition_str(&text)?;
            let analysis = analyze_partition(&part, true, cli.search_ordering, tol)?;
            let meta = ReportMeta {
                command: with_search(format!("analyze {}", file.display()), cli),
                source: format!("file:{}", file.display()),
                digest: format!("sha256:{}", formats::sha256_hex(text.as_bytes())),
                tol: cli.tol,
            };
            finish(cli, meta, analysis, ExitRule::QPolynomial)
        }
        Cmd::Construct(op) => {
            let (construction, command) = build(op, tol)?;
            let analysis = analyze_construction(construction, cli.search_ordering, tol)?;
            let canonical = emit_partition_str(analysis.config.partition());
            let meta = ReportMeta {
                command: with_search(command, cli),
                source: "construct".into(),
                digest: format!("sha256:{}", formats::sha256_hex(canonical.as_bytes())),
                tol: cli.tol,
            };
            finish(cli, meta, analysis, ExitRule::QPolynomial)
        }
        Cmd::Catalog(CatalogCmd::List) => Ok((catalog_listing(cli.format), 0)),
        Cmd::Catalog(CatalogCmd::Emit { name }) => {
            let obj = lookup(name)?;
            Ok((emit_object(&obj), 0))
        }
        Cmd::AppendixCheck { input } => {
            let (part, source, digest) = resolve_partition(input)?;
            let analysis = analyze_partition(&part, false, false, tol)?;
            let meta = ReportMeta {
                command: format!("appendix-check {input}"),
                source,
                digest,
                tol: cli.tol,
            };
            finish(cli, meta, analysis, ExitRule::Identities)
        }
    }
}

fn with_search(mut command: String, cli: &Cli) -> String {
    if cli.search_ordering {
        command.push_str(" --search-ordering");
    }
    command
}

enum ExitRule {
    QPolynomial,
    Identities,
}

fn finish(
    cli: &Cli,
    meta: ReportMeta,
    analysis: Analysis,
    rule: ExitRule,
) -> Result<(String, i32), Failure> {
    let ok = match rule {
        ExitRule::QPolynomial => analysis
            .verdict
            .as_ref()
            .is_some_and(|v| v.is_q_polynomial),
        ExitRule::Identities => analysis.identities_pass() && analysis.basis_report.pass,
    };
    let rendered = match cli.format {
        Format::Text => analysis_text(&meta, &analysis),
        Format::Json => render_json(&report_value(&meta, &analysis)),
    };
    Ok((rendered, if ok { 0 } else { 2 }))
}

// ---------------------------------------------------------------------------
// Input resolution: file path if one exists, else catalog name
// ---------------------------------------------------------------------------

fn resolve_partition(arg: &str) -> Result<(RelationPartition, String, String), Failure> {
    if Path::new(arg).is_file() {
        let text = formats::read_file(Path::new(arg))?;
        let part = parse_partition_str(&text)
            .map_err(|e| input_fail(format!("{arg}: {e}")))?;
        let digest = format!("sha256:{}", formats::sha256_hex(text.as_bytes()));
        return Ok((part, format!("file:{arg}"), digest));
    }
    match lookup(arg) {
        Ok(CatalogObject::Partition(part)) => {
            let digest = format!(
                "sha256:{}",
                formats::sha256_hex(emit_partition_str(&part).as_bytes())
            );
            Ok((part, format!("catalog:{arg}"), digest))
        }
        Ok(_) => Err(input_fail(format!(
            "{arg} names a catalog object that is not a relation partition"
        ))),
        Err(e) => Err(input_fail(format!("no file named {arg:?}, and {e}"))),
    }
}

fn resolve_code(arg: &str) -> Result<Code, Failure> {
    if Path::new(arg).is_file() {
        let text = formats::read_file(Path::new(arg))?;
        return parse_code_str(&text).map_err(|e| input_fail(format!("{arg}: {e}")));
    }
    match lookup(arg) {
        Ok(CatalogObject::Code(code)) => Ok(code),
        Ok(_) => Err(input_fail(format!(
            "{arg} names a catalog object that is not a code"
        ))),
        Err(e) => Err(input_fail(format!("no file named {arg:?}, and {e}"))),
    }
}

fn resolve_pointset(arg: &str) -> Result<PointSet, Failure> {
    if Path::new(arg).is_file() {
        let text = formats::read_file(Path::new(arg))?;
        let tag = Path::new(arg)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("points");
        return parse_pointset_str(&text, tag).map_err(|e| input_fail(format!("{arg}: {e}")));
    }
    match lookup(arg) {
        Ok(CatalogObject::Points(ps)) => Ok(ps),
        Ok(_) => Err(input_fail(format!(
            "{arg} names a catalog object that is not a point set"
        ))),
        Err(e) => Err(input_fail(format!("no file named {arg:?}, and {e}"))),
    }
}

fn parse_usize_list(arg: &str) -> Result<Vec<usize>, Failure> {
    arg.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| input_fail(format!("{t:?} is not a nonnegative integer")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Construction dispatch
// ---------------------------------------------------------------------------

fn build(op: &ConstructCmd, tol: Tolerance) -> Result<(Construction, String), Failure> {
    match op {
        ConstructCmd::Power { scheme, copies } => {
            let (part, _, _) = resolve_partition(scheme)?;
            let c = nth_power(&part, *copies, tol)?;
            Ok((c, format!("construct power --scheme {scheme} --copies {copies}")))
        }
        ConstructCmd::Delsarte {
            scheme,
            codes,
            subsets,
        } => {
            let (part, _, _) = resolve_partition(scheme)?;
            let mut fibers: Vec<Vec<usize>> = Vec::new();
            let mut command = format!("construct delsarte --scheme {scheme}");
            for c in codes {
                fibers.push(resolve_code(c)?.point_indices());
                command.push_str(&format!(" --code {c}"));
            }
            for s in subsets {
                fibers.push(parse_usize_list(s)?);
                command.push_str(&format!(" --subset {s}"));
            }
            if fibers.is_empty() {
                return Err(input_fail(
                    "construct delsarte needs at least one --code or --subset",
                ));
            }
            let c = delsarte_union(&part, &fibers, tol)?;
            Ok((c, command))
        }
        ConstructCmd::Sphere {
            fibers,
            derive,
            base_index,
        } => {
            let (sets, command) = if !fibers.is_empty() {
                let mut sets = Vec::with_capacity(fibers.len());
                let mut command = String::from("construct sphere --fibers");
                for p in fibers {
                    sets.push(formats::read_pointset(p)?);
                    command.push_str(&format!(" {}", p.display()));
                }
                (sets, command)
            } else if let Some(name) = derive {
                let ps = resolve_pointset(name)?;
                let sets: Vec<PointSet> = derived_designs(&ps, *base_index)?
                    .into_iter()
                    .map(|d| d.points)
                    .collect();
                (
                    sets,
                    format!("construct sphere --derive {name} --base-index {base_index}"),
                )
            } else {
                return Err(input_fail("construct sphere needs --fibers or --derive"));
            };
            let c = spherical_union(&sets, tol)?;
            Ok((c, command))
        }
        ConstructCmd::Mub { base_index } => {
            let c = mub_config(&mub_r4_bases(), *base_index, tol)?;
            Ok((c, format!("construct mub --base-index {base_index}")))
        }
        ConstructCmd::Terwilliger { n } => {
            let c = terwilliger_h_n_2(*n, tol)?;
            Ok((c, format!("construct terwilliger --n {n}")))
        }
        ConstructCmd::Restrict { n, shells, codes } => {
            let c = build_restrict(*n, shells, codes, tol)?;
            let mut command = format!("construct restrict --n {n} --shells {shells}");
            for code in codes {
                command.push_str(&format!(" --code {code}"));
            }
            Ok((c, command))
        }
    }
}

fn build_restrict(
    n: usize,
    shells_arg: &str,
    codes: &[String],
    tol: Tolerance,
) -> Result<Construction, Failure> {
    let shells = parse_usize_list(shells_arg)?;
    if shells.is_empty() || shells.windows(2).any(|w| w[0] >= w[1]) {
        return Err(input_fail("--shells must be strictly ascending weights"));
    }
    if let Some(&bad) = shells.iter().find(|&&s| s > n) {
        return Err(input_fail(format!("shell weight {bad} exceeds the cube dimension {n}")));
    }
    if codes.len() != shells.len() {
        return Err(input_fail(format!(
            "need one --code per shell: {} shell(s), {} code(s)",
            shells.len(),
            codes.len()
        )));
    }
    let full = terwilliger_h_n_2(n, tol)?;
    let sub_cfg = restrict_to_fibers(&full.config, &shells)?;
    let sub_basis = restrict_basis_to_fibers(&full.basis, &shells)?;
    let mut subsets: Vec<Vec<usize>> = Vec::with_capacity(shells.len());
    for (&shell, code_arg) in shells.iter().zip(codes) {
        let code = resolve_code(code_arg)?;
        if code.q() != 2 || code.n() != n {
            return Err(input_fail(format!(
                "{code_arg}: expected a binary code of length {n}, got alphabet {} length {}",
                code.q(),
                code.n()
            )));
        }
        // Rank of each word among the weight-`shell` words in ascending
        // numeric order — the shell's internal point order.
        let mut rank: BTreeMap<usize, usize> = BTreeMap::new();
        for x in 0..1usize << n {
            if x.count_ones() as usize == shell {
                let r = rank.len();
                rank.insert(x, r);
            }
        }
        let mut local = Vec::with_capacity(code.len());
        for w in code.point_indices() {
            match rank.get(&w) {
                Some(&r) => local.push(r),
                None => {
                    return Err(input_fail(format!(
                        "{code_arg}: word {w:#0width$b} does not have weight {shell}",
                        width = n + 2
                    )))
                }
            }
        }
        subsets.push(local);
    }
    Ok(restrict_in_fibers(&sub_cfg, &sub_basis, &subsets, tol)?)
}

// ---------------------------------------------------------------------------
// Catalog listing
// ---------------------------------------------------------------------------

fn catalog_listing(format: Format) -> String {
    let rows = entries();
    match format {
        Format::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|e| json!({"name": e.name, "kind": e.kind, "note": e.note}))
                .collect();
            report::render_json(&json!({"schema": report::SCHEMA, "catalog": items}))
        }
        Format::Text => {
            let name_w = rows.iter().map(|e| e.name.len()).max().unwrap_or(4);
            let kind_w = rows.iter().map(|e| e.kind.len()).max().unwrap_or(4);
            let mut out = String::new();
            for e in &rows {
                out.push_str(&format!(
                    "{:<name_w$}  {:<kind_w$}  {}\n",
                    e.name, e.kind, e.note
                ));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccq_core::catalog::{emit_partition_str, rectangular_partition};

    fn run_vec(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn terwilliger_json_report_round_trips() {
        let (code, out, err) = run_vec(&[
            "ccq",
            "construct",
            "terwilliger",
            "--n",
            "2",
            "--format",
            "json",
        ]);
        assert_eq!(code, 0, "stderr: {err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["schema"], "ccq/1");
        assert_eq!(v["q_polynomial"]["verdict"], true);
        assert_eq!(v["structure"]["fibers"], json!([1, 2, 1]));
    }

    #[test]
    fn reports_are_byte_identical_across_thread_counts() {
        let base = [
            "ccq", "construct", "mub", "--format", "json", "--threads",
        ];
        let (c1, out1, _) = run_vec(&[&base[..], &["1"]].concat());
        let (c2, out2, _) = run_vec(&[&base[..], &["7"]].concat());
        assert_eq!((c1, c2), (0, 0));
        assert_eq!(out1, out2);
        assert!(!out1.is_empty());
    }

    #[test]
    fn validate_rejects_broken_diagonal_with_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.part");
        // Relation 0 is not the diagonal on the second point.
        formats::write_file(&path, "points 2 relations 2\n0 1\n1 1\n").unwrap();
        let (code, _, err) = run_vec(&["ccq", "validate", path.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("axiom"), "stderr: {err}");
    }

    #[test]
    fn analyze_non_q_polynomial_scheme_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.part");
        let part = rectangular_partition(3, 3).unwrap();
        formats::write_file(&path, &emit_partition_str(&part)).unwrap();
        let (code, out, _) =
            run_vec(&["ccq", "analyze", path.to_str().unwrap(), "--search-ordering"]);
        assert_eq!(code, 2);
        assert!(out.contains("q-polynomial: FALSE"));
    }

    #[test]
    fn appendix_check_accepts_catalog_names() {
        let (code, out, err) = run_vec(&["ccq", "appendix-check", "hamming:3,2"]);
        assert_eq!(code, 0, "stderr: {err}");
        assert!(out.contains("identity suite: PASS"));
        // Not a partition -> input error.
        let (code, _, err) = run_vec(&["ccq", "appendix-check", "icosahedron"]);
        assert_eq!(code, 1);
        assert!(err.contains("not a relation partition"));
    }

    #[test]
    fn catalog_list_and_emit() {
        let (code, out, _) = run_vec(&["ccq", "catalog", "list"]);
        assert_eq!(code, 0);
        assert!(out.contains("hamming:<n>,<q>") && out.contains("e8_roots"));
        let (code, out, _) = run_vec(&["ccq", "catalog", "emit", "even:3"]);
        assert_eq!(code, 0);
        assert_eq!(out, "alphabet 2 length 3\n000\n011\n101\n110\n");
        let (code, _, err) = run_vec(&["ccq", "catalog", "emit", "no_such_thing"]);
        assert_eq!(code, 1);
        assert!(err.contains("unknown catalog name"));
    }

    #[test]
    fn unknown_flags_exit_1_and_help_exits_0() {
        let (code, _, err) = run_vec(&["ccq", "analyze", "x.part", "--bogus"]);
        assert_eq!(code, 1);
        assert!(!err.is_empty());
        let (code, out, _) = run_vec(&["ccq", "--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("appendix-check"));
    }

    #[test]
    fn out_flag_writes_the_report_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let (code, out, _) = run_vec(&[
            "ccq",
            "construct",
            "terwilliger",
            "--n",
            "2",
            "--format",
            "json",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["q_polynomial"]["verdict"], true);
    }

    #[test]
    fn sphere_derive_pentagon_slices_work_from_catalog() {
        let (code, out, err) = run_vec(&[
            "ccq",
            "construct",
            "sphere",
            "--derive",
            "icosahedron",
            "--format",
            "json",
        ]);
        assert_eq!(code, 0, "stderr: {err}");
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["structure"]["fibers"], json!([5, 5]));
        assert_eq!(v["q_polynomial"]["verdict"], true);
        assert_eq!(v["identities"]["pass"], true);
    }
}
