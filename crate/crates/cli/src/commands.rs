use std::error::Error;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use stardil_core::algebroid::{self, amplify_map, positive_form_rep, sample_cp_check, sqrt_one_minus, AlgebroidError};
use stardil_core::ckt::{check_restricted_orthogonality, induce_representation, validate_ckt, CKT_TOL};
use stardil_core::dilation::{
    check_partial_isometries, dilate, embed_unital, minimalize, unitary_equivalence, verify_dilation, Dilation,
    DilationError, VerificationReport,
};
use stardil_core::free::{free_groupoid, free_semigroupoid, free_star_semigroupoid};
use stardil_core::io::{
    read_json, to_json, AmplifiedDoc, DilationDocument, FamilyDocument, FormDocument, GraphDoc, MapDocument,
    MatrixDoc, SgdDocument,
};
use stardil_core::leftreg::{check_lr_properties, left_regular, multiplicity_profile};
use stardil_core::linalg::{hermitian_defect, hermitian_eig_min, identity, max_abs, max_abs_diff, VERIFY_TOL};
use stardil_core::psd::{bound_report, check_psd, check_psd_window, check_unital, AggregationMap, CoherentMap, FiberStatus, PSD_TOL};
use stardil_core::table::SemigroupoidTable;

use crate::report::{Check, Report};
use crate::{Command, FreeKind, Global};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

/// Default seed of sampling commands.
pub const DEFAULT_SEED: u64 = 42;

/// SHA-256 over the command name and the bytes of every input file.
fn digest(command: &str, inputs: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for p in inputs {
        let bytes = std::fs::read(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable")
}

fn load_table(path: &Path) -> Result<SemigroupoidTable> {
    Ok(read_json::<SgdDocument>(path)?.to_table()?)
}

fn load_map(path: &Path) -> Result<CoherentMap> {
    Ok(read_json::<MapDocument>(path)?.to_map(Some(path))?)
}

fn load_dilation(path: &Path) -> Result<Dilation> {
    Ok(read_json::<DilationDocument>(path)?.to_dilation()?)
}

/// Writes `doc` to `--out`, or returns it for embedding in the report.
fn emit<T: Serialize>(global: &Global, doc: &T) -> Result<Value> {
    match &global.out {
        Some(path) => {
            std::fs::write(path, to_json(doc)).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            Ok(json!({ "written": path.display().to_string() }))
        }
        None => Ok(to_value(doc)),
    }
}

fn reject_out(global: &Global, command: &str) -> Result<()> {
    if global.out.is_some() {
        return Err(format!("{command} produces no document; --out is not accepted").into());
    }
    Ok(())
}

fn verification_checks(r: &VerificationReport, tol: f64) -> Vec<Check> {
    let mut checks: Vec<Check> = r
        .residuals()
        .into_iter()
        .map(|(name, value)| Check::below(name, value, tol, || json!({ "residual": value })))
        .collect();
    let defect = r.minimality_defect.clone();
    checks.push(Check::flag("minimality", r.is_minimal(), || {
        let points: Vec<Value> =
            defect.iter().enumerate().filter(|(_, &d)| d > 0).map(|(x, &d)| json!({ "point": x, "defect": d })).collect();
        json!(points)
    }));
    checks
}

/// A not-positive map is a FAIL verdict rather than an error.
fn psd_failure(e: &DilationError) -> Option<Check> {
    match e {
        DilationError::NotPsd { fiber, lambda_min } => {
            let (fiber, lambda_min) = (*fiber, *lambda_min);
            Some(Check::nonnegative("psd", lambda_min, PSD_TOL, || json!({ "fiber": fiber, "lambda_min": lambda_min })))
        }
        _ => None,
    }
}

pub fn dispatch(command: &Command, global: &Global) -> Result<Report> {
    let tol = global.tol.unwrap_or(VERIFY_TOL);
    match command {
        Command::Validate { sgd } => {
            reject_out(global, "validate")?;
            let table = load_table(sgd)?;
            let r = table.validate();
            let first = r.violations.first().cloned();
            let checks = vec![Check::flag("axioms", r.is_valid(), || to_value(&first))];
            let data = json!({ "violations": r.violations, "capped": r.capped, "isolated_objects": r.isolated_objects });
            Ok(Report::new("validate", digest("validate", &[sgd])?, checks, data, None))
        }
        Command::Classify { sgd } => {
            reject_out(global, "classify")?;
            let table = load_table(sgd)?;
            let r = table.validate();
            let first = r.violations.first().cloned();
            let checks = vec![Check::flag("axioms", r.is_valid(), || to_value(&first))];
            let data = json!({ "flags": table.classify() });
            Ok(Report::new("classify", digest("classify", &[sgd])?, checks, data, None))
        }
        Command::FreeGen { graph, lmax, kind, no_units } => {
            let g = read_json::<GraphDoc>(graph)?.to_graph()?;
            let free = match kind {
                FreeKind::Plain => free_semigroupoid(&g, *lmax, !no_units)?,
                FreeKind::Star => free_star_semigroupoid(&g, *lmax)?,
                FreeKind::Groupoid => free_groupoid(&g, *lmax)?,
            };
            let r = free.table.validate();
            let first = r.violations.first().cloned();
            let checks = vec![Check::flag("axioms", r.is_valid(), || to_value(&first))];
            let doc = emit(global, &SgdDocument::from_free(&free))?;
            let data = json!({ "elements": free.table.n_elements(), "max_len": free.max_len, "document": doc });
            Ok(Report::new("free-gen", digest("free-gen", &[graph])?, checks, data, None))
        }
        Command::PsdCheck { map } => {
            reject_out(global, "psd-check")?;
            let t = load_map(map)?;
            // Truncated tables: only words of at most half the bound have all
            // their Gram products inside the table.
            let r = match t.table().truncation() {
                Some(l) => check_psd_window(&t, l / 2)?,
                None => check_psd(&t)?,
            };
            let checks = r
                .fibers
                .iter()
                .map(|f| {
                    let name = format!("fiber {}", f.fiber);
                    match f.status {
                        FiberStatus::Checked { lambda_min, threshold, .. } => Check::nonnegative(&name, lambda_min, -threshold, || {
                            json!({ "fiber": f.fiber, "lambda_min": lambda_min })
                        }),
                        FiberStatus::NotCheckable { left, right } => {
                            Check::flag(&name, false, || json!({ "missing_product": [left, right] }))
                        }
                    }
                })
                .collect();
            let data = json!({ "fibers": r.fibers, "window": r.window });
            Ok(Report::new("psd-check", digest("psd-check", &[map])?, checks, data, None))
        }
        Command::Bound { map } => {
            reject_out(global, "bound")?;
            let t = load_map(map)?;
            let (checks, data) = match bound_report(&t) {
                Ok(r) => {
                    let all_finite = r.constants.iter().all(|e| e.finite && e.constant.is_finite());
                    let bad = r.constants.iter().find(|e| !e.constant.is_finite()).map(|e| e.element);
                    (vec![Check::flag("finite", all_finite, || json!({ "element": bad }))], json!({ "constants": r.constants }))
                }
                Err(e) => (vec![psd_failure(&e).ok_or(e)?], Value::Null),
            };
            Ok(Report::new("bound", digest("bound", &[map])?, checks, data, None))
        }
        Command::Dilate { map } => {
            let t = load_map(map)?;
            let (checks, data) = match dilate(&t) {
                Ok(d) => {
                    let r = verify_dilation(&t, &d)?;
                    let mut checks = verification_checks(&r, tol);
                    if t.table().classify().inverse_semigroupoid {
                        let p = check_partial_isometries(t.table(), &d)?;
                        let (tp, worst, norm) = (p.triple_product, p.worst_element, p.max_norm);
                        checks.push(Check::below("partial_isometry", tp, tol, || json!({ "element": worst, "residual": tp })));
                        checks.push(Check::numeric("contraction", norm, tol, norm <= 1.0 + tol, || json!({ "op_norm": norm })));
                    }
                    let doc = emit(global, &DilationDocument::from_dilation(&d))?;
                    let ranks: Vec<usize> = d.factors.iter().map(|f| f.rank()).collect();
                    let data = json!({ "k_dims": d.k_dims, "ranks": ranks, "window": d.window, "dilation": doc });
                    (checks, data)
                }
                Err(e) => (vec![psd_failure(&e).ok_or(e)?], Value::Null),
            };
            Ok(Report::new("dilate", digest("dilate", &[map])?, checks, data, None))
        }
        Command::Verify { map, dilation } => {
            reject_out(global, "verify")?;
            let t = load_map(map)?;
            let d = load_dilation(dilation)?;
            let r = verify_dilation(&t, &d)?;
            let data = json!({ "minimality_defect": r.minimality_defect });
            Ok(Report::new("verify", digest("verify", &[map, dilation])?, verification_checks(&r, tol), data, None))
        }
        Command::Equiv { map, first, second } => {
            reject_out(global, "equiv")?;
            let t = load_map(map)?;
            let (d1, d2) = (load_dilation(first)?, load_dilation(second)?);
            let checks = match unitary_equivalence(&d1, &d2, &t) {
                Ok(w) => vec![
                    Check::below("unitarity", w.unitarity, tol, || json!({ "residual": w.unitarity })),
                    Check::below("intertwining", w.intertwining, tol, || json!({ "residual": w.intertwining })),
                    Check::below("v_matching", w.v_matching, tol, || json!({ "residual": w.v_matching })),
                ],
                Err(DilationError::DimensionMismatch { object, left, right }) => {
                    vec![Check::flag("dimensions", false, || json!({ "object": object, "first": left, "second": right }))]
                }
                Err(DilationError::InputNotVerified { which, residual }) => {
                    vec![Check::below("inputs", residual, INPUT_BUDGET, || json!({ "dilation": which, "residual": residual }))]
                }
                Err(e) => return Err(e.into()),
            };
            Ok(Report::new("equiv", digest("equiv", &[map, first, second])?, checks, Value::Null, None))
        }
        Command::Minimalize { map, dilation } => {
            let t = load_map(map)?;
            let d = load_dilation(dilation)?;
            let m = minimalize(&d, &t)?;
            let r = verify_dilation(&t, &m)?;
            let doc = emit(global, &DilationDocument::from_dilation(&m))?;
            let data = json!({ "k_dims_before": d.k_dims, "k_dims": m.k_dims, "dilation": doc });
            Ok(Report::new("minimalize", digest("minimalize", &[map, dilation])?, verification_checks(&r, tol), data, None))
        }
        Command::Embed { map, dilation } => {
            reject_out(global, "embed")?;
            let t = load_map(map)?;
            let unital = check_unital(&t)?;
            if !unital.passed() {
                let worst = unital.worst_point().cloned();
                let value = worst.as_ref().map_or(0.0, |p| p.worst());
                let checks = vec![Check::below("unital", value, unital.tolerance, || to_value(&worst))];
                let inputs: Vec<&Path> = std::iter::once(map.as_path()).chain(dilation.as_deref()).collect();
                return Ok(Report::new("embed", digest("embed", &inputs)?, checks, Value::Null, None));
            }
            let d = match dilation {
                Some(p) => load_dilation(p)?,
                None => dilate(&t)?,
            };
            let e = embed_unital(&t, &d)?;
            let checks = vec![
                Check::below("isometry", e.isometry, tol, || json!({ "residual": e.isometry })),
                Check::below("compression", e.compression, tol, || json!({ "residual": e.compression })),
            ];
            let inputs: Vec<&Path> = std::iter::once(map.as_path()).chain(dilation.as_deref()).collect();
            Ok(Report::new("embed", digest("embed", &inputs)?, checks, Value::Null, None))
        }
        Command::CktCheck { family } => {
            reject_out(global, "ckt-check")?;
            let fam = read_json::<FamilyDocument>(family)?.to_family()?;
            let r = validate_ckt(&fam);
            let tol = global.tol.unwrap_or(CKT_TOL);
            let worst_i = r.worst_condition_i().cloned();
            let worst_ckt = r.worst_condition_ckt().cloned();
            let mut checks = vec![
                Check::below("idempotent", r.idempotent, tol, || json!({ "residual": r.idempotent })),
                Check::below("hermitian", r.hermitian, tol, || json!({ "residual": r.hermitian })),
                Check::below("orthogonality", r.orthogonality, tol, || json!({ "residual": r.orthogonality })),
            ];
            let value_i = worst_i.as_ref().map_or(0.0, |e| e.value);
            checks.push(Check::below("condition_i", value_i, tol, || to_value(&worst_i)));
            let value_ckt = worst_ckt.as_ref().map_or(0.0, |v| v.value);
            checks.push(Check::nonnegative("condition_ckt", value_ckt, tol, || to_value(&worst_ckt)));
            // (CK) and nondegeneracy are properties of the family, not
            // requirements of a CKT family; reported without a verdict.
            let data = json!({
                "condition_i": r.condition_i,
                "condition_ckt": r.condition_ckt,
                "condition_ck": r.condition_ck,
                "ck_holds": r.condition_ck_holds(),
                "range_containment": r.range_containment,
                "nondegenerate": r.nondegenerate,
                "is_nondegenerate": r.is_nondegenerate(),
            });
            Ok(Report::new("ckt-check", digest("ckt-check", &[family])?, checks, data, None))
        }
        Command::Induce { family, lmax } => {
            let fam = read_json::<FamilyDocument>(family)?.to_family()?;
            let induced = induce_representation(&fam, *lmax)?;
            let orth = check_restricted_orthogonality(&induced);
            let (m, a) = (induced.check.multiplicativity, induced.check.adjoint);
            let checks = vec![
                Check::below("multiplicativity", m, tol, || json!({ "residual": m })),
                Check::below("adjoint", a, tol, || json!({ "residual": a })),
                Check::below("restricted_orthogonality", orth.residual, tol, || json!({ "residual": orth.residual })),
            ];
            let doc = emit(global, &MapDocument::from_map(&induced.map))?;
            let data = json!({
                "elements": induced.free.table.n_elements(),
                "pairs_checked": orth.pairs_checked,
                "skipped_starred": orth.skipped_starred,
                "map": doc,
            });
            Ok(Report::new("induce", digest("induce", &[family])?, checks, data, None))
        }
        Command::Leftreg { sgd, tau } => {
            reject_out(global, "leftreg")?;
            let table = load_table(sgd)?;
            let tau = match tau {
                Some(t) => {
                    if t.len() != table.n_objects() {
                        return Err(format!("--tau has {} entries for {} objects", t.len(), table.n_objects()).into());
                    }
                    AggregationMap::new(t.clone())
                }
                None => AggregationMap::identity(table.n_objects()),
            };
            let space = left_regular(&table, &tau);
            let r = check_lr_properties(&table, &space);
            let tol = global.tol.unwrap_or(r.tolerance);
            let checks = vec![
                Check::below("partial_isometry", r.partial_isometry, tol, || json!({ "residual": r.partial_isometry })),
                Check::below("projection", r.projection, tol, || json!({ "residual": r.projection })),
                Check::below("multiplicativity", r.multiplicativity, tol, || json!({ "residual": r.multiplicativity })),
                Check::below("orthogonality", r.orthogonality, tol, || json!({ "residual": r.orthogonality })),
                Check::numeric("norm_bound", r.norm_excess, tol, r.norm_excess <= tol, || {
                    json!({ "element": r.worst_norm_element, "excess": r.norm_excess })
                }),
            ];
            let profiles: Vec<_> = table.elements().map(|g| multiplicity_profile(&table, g)).collect();
            let data = json!({
                "partial_isometry_checked": r.partial_isometry_checked,
                "overflow": space.has_overflow(),
                "profiles": profiles,
            });
            Ok(Report::new("leftreg", digest("leftreg", &[sgd])?, checks, data, None))
        }
        Command::Amplify { map, element } => {
            let t = load_map(map)?;
            let a = read_json::<AmplifiedDoc>(element)?.to_amplified(t.table())?;
            let value = amplify_map(&t, &a);
            let aa = a.star(t.table())?.mul(t.table(), &a)?;
            let positive = amplify_map(&t, &aa);
            let lambda_min = if positive.nrows() == 0 { 0.0 } else { hermitian_eig_min(&positive)? };
            let tol = global.tol.unwrap_or(algebroid::CP_TOL) * 1f64.max(max_abs(&positive));
            let checks = vec![Check::nonnegative("positivity", lambda_min, tol, || json!({ "lambda_min": lambda_min }))];
            let doc = emit(global, &MatrixDoc::from_matrix(&value))?;
            Ok(Report::new("amplify", digest("amplify", &[map, element])?, checks, json!({ "value": doc }), None))
        }
        Command::CpCheck { map, n_max, trials } => {
            reject_out(global, "cp-check")?;
            let t = load_map(map)?;
            let seed = global.seed.unwrap_or(DEFAULT_SEED);
            let r = sample_cp_check(&t, *n_max, *trials, seed)?;
            let tol = global.tol.unwrap_or(r.tolerance);
            let witness = r.witness.as_ref().map(|w| {
                json!({ "n": w.n, "trial": w.trial, "lambda_min": w.lambda_min, "element": AmplifiedDoc::from_amplified(&w.element) })
            });
            let checks = r
                .levels
                .iter()
                .map(|l| {
                    let ok = l.failures == 0;
                    Check::numeric(&format!("n={}", l.n), l.worst_lambda_min, tol, ok, || {
                        witness.clone().filter(|w| w["n"] == l.n).unwrap_or(json!({ "failures": l.failures }))
                    })
                })
                .collect();
            let data = json!({ "trials": r.trials, "levels": r.levels, "first_failing_n": r.first_failing_n() });
            Ok(Report::new("cp-check", digest("cp-check", &[map])?, checks, data, Some(seed)))
        }
        Command::SqrtSeries { matrix, series_tol } => {
            let a = read_json::<MatrixDoc>(matrix)?.to_matrix("matrix")?;
            if a.nrows() != a.ncols() {
                return Err(format!("matrix must be square, found {}x{}", a.nrows(), a.ncols()).into());
            }
            let s = match sqrt_one_minus(&a, *series_tol) {
                Ok(s) => s,
                Err(AlgebroidError::NotStrictContraction { norm }) => {
                    let checks = vec![Check::below("contraction", norm, 1.0, || json!({ "op_norm": norm }))];
                    return Ok(Report::new("sqrt-series", digest("sqrt-series", &[matrix])?, checks, Value::Null, None));
                }
                Err(e) => return Err(e.into()),
            };
            let target = identity(a.ncols()) - a.adjoint() * &a;
            let square = max_abs_diff(&(&s.b * &s.b), &target);
            let herm = hermitian_defect(&s.b);
            let checks = vec![
                Check::below("square", square, tol, || json!({ "residual": square })),
                Check::below("hermitian", herm, tol, || json!({ "residual": herm })),
            ];
            let doc = emit(global, &MatrixDoc::from_matrix(&s.b))?;
            let data = json!({ "terms": s.terms, "tail_bound": s.tail_bound, "b": doc });
            Ok(Report::new("sqrt-series", digest("sqrt-series", &[matrix])?, checks, data, None))
        }
        Command::FormRep { form } => {
            let (table, omega) = read_json::<FormDocument>(form)?.to_form(Some(form))?;
            let (checks, data) = match positive_form_rep(&omega, &table) {
                Ok(f) => {
                    let mut checks = verification_checks(&f.verification, tol);
                    let rep = f.representation;
                    checks.push(Check::below("form", rep, tol, || json!({ "residual": rep })));
                    let xi: Vec<MatrixDoc> = f.xi.iter().map(MatrixDoc::from_matrix).collect();
                    let doc = emit(global, &DilationDocument::from_dilation(&f.dilation))?;
                    let ranks: Vec<usize> = f.dilation.factors.iter().map(|g| g.rank()).collect();
                    (checks, json!({ "k_dims": f.dilation.k_dims, "ranks": ranks, "cyclic": f.cyclic(), "xi": xi, "dilation": doc }))
                }
                Err(AlgebroidError::Dilation(e)) => (vec![psd_failure(&e).ok_or(e)?], Value::Null),
                Err(e) => return Err(e.into()),
            };
            Ok(Report::new("form-rep", digest("form-rep", &[form])?, checks, data, None))
        }
    }
}

/// Worst residual accepted for dilations handed to `equiv`.
const INPUT_BUDGET: f64 = stardil_core::dilation::INPUT_TOL;
