//! Model persistence: a line-based text archive with floats stored as IEEE
//! bit patterns in hex, so save/load round-trips are bit-exact and archives
//! of identical fits are byte-identical.

use crate::embed::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::manifold::{SsmModel, TangentDiagnostics};
use crate::normal_form::{
    NormalFormModel, PolarForm, PolarPair, PolarTerm, ResonanceCriterion, ResonanceOptions,
};
use crate::poly::{enumerate_monomials, PolyMap};
use crate::predict::FullModel;
use crate::reduced::ReducedModel;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

pub const ARCHIVE_VERSION: u32 = 1;
pub const ORDERING_TAG: &str = "graded-lex-var1-dominant";

/// Provenance carried by an archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveMeta {
    pub tool_version: String,
    pub config_hash: u64,
    /// Free-form stamp recorded verbatim (no whitespace); empty by default
    /// so that repeated runs stay byte-identical.
    pub stamp: String,
}

/// 64-bit FNV-1a, used for config hashes in archives and curve headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn put_f(out: &mut String, x: f64) {
    let _ = write!(out, " {:016x}", x.to_bits());
}

fn put_c(out: &mut String, z: Complex64) {
    put_f(out, z.re);
    put_f(out, z.im);
}

fn put_real_matrix(out: &mut String, tag: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "mat {tag} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            put_f(out, m[(r, c)]);
        }
        out.push('\n');
    }
}

fn put_complex_matrix(out: &mut String, tag: &str, m: &DMatrix<Complex64>) {
    let _ = writeln!(out, "cmat {tag} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            put_c(out, m[(r, c)]);
        }
        out.push('\n');
    }
}

fn put_real_pmap(out: &mut String, tag: &str, m: &PolyMap<f64>) {
    let _ = writeln!(
        out,
        "pmap {tag} {} {} {}",
        m.basis().dim(),
        m.basis().order_lo(),
        m.basis().order_hi()
    );
    put_real_matrix(out, "coeffs", m.coeffs());
}

fn put_complex_pmap(out: &mut String, tag: &str, m: &PolyMap<Complex64>) {
    let _ = writeln!(
        out,
        "cpmap {tag} {} {} {}",
        m.basis().dim(),
        m.basis().order_lo(),
        m.basis().order_hi()
    );
    put_complex_matrix(out, "coeffs", m.coeffs());
}

fn put_f64_list(out: &mut String, tag: &str, xs: &[f64]) {
    let _ = write!(out, "flist {tag} {}", xs.len());
    for &x in xs {
        put_f(out, x);
    }
    out.push('\n');
}

/// Serializes the full model to the archive text.
pub fn to_string(model: &FullModel, meta: &ArchiveMeta) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ssmrom-archive {ARCHIVE_VERSION}");
    let _ = writeln!(out, "tool {}", meta.tool_version);
    let _ = writeln!(out, "config_hash {:016x}", meta.config_hash);
    let stamp_hex = if meta.stamp.is_empty() {
        "-".to_string()
    } else {
        meta.stamp
            .as_bytes()
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    };
    let _ = writeln!(out, "stamp {stamp_hex}");
    let _ = writeln!(out, "ordering {ORDERING_TAG}");
    let _ = write!(out, "embedding {} {}", model.embedding.p, model.embedding.k);
    put_f(&mut out, model.embedding.dt);
    out.push('\n');
    let _ = writeln!(out, "n_obs {}", model.n_obs);

    // manifold
    put_real_matrix(&mut out, "tangent", model.ssm.tangent());
    put_real_pmap(&mut out, "param", model.ssm.param());
    let diag = model.ssm.diagnostics();
    put_f64_list(&mut out, "singular_values", &diag.singular_values);
    put_f64_list(&mut out, "scale_factors", &diag.scale_factors);
    put_f64_list(
        &mut out,
        "manifold_diag",
        &[
            diag.energy_captured,
            model.ssm.recon_error(),
            model.ssm.tangent_alignment(),
        ],
    );

    // reduced dynamics
    put_real_pmap(&mut out, "dynamics", model.reduced.dynamics());
    put_complex_matrix(&mut out, "eigvecs", model.reduced.eigvecs());
    let lambda_mat = DMatrix::from_fn(model.reduced.dim(), 1, |i, _| {
        model.reduced.eigenvalues()[i]
    });
    put_complex_matrix(&mut out, "lambda", &lambda_mat);
    put_complex_pmap(&mut out, "modal", model.reduced.modal());
    put_f64_list(
        &mut out,
        "dynamics_residual",
        &[model.reduced.fit_residual()],
    );

    // normal form
    put_complex_pmap(&mut out, "nf_dynamics", model.normal_form.dynamics());
    put_complex_pmap(&mut out, "nf_transform", model.normal_form.transform());
    let _ = writeln!(out, "resonances {}", model.normal_form.resonances().len());
    for (row, exps) in model.normal_form.resonances() {
        let _ = write!(out, "res {row}");
        for e in exps {
            let _ = write!(out, " {e}");
        }
        out.push('\n');
    }
    let opts = model.normal_form.options();
    let crit = match opts.criterion {
        ResonanceCriterion::ImaginaryOnly => "imaginary",
        ResonanceCriterion::FullComplex => "full",
    };
    let _ = write!(out, "nf_options {crit}");
    put_f(&mut out, opts.tol_res);
    out.push('\n');
    match model.normal_form.inverse_map() {
        Some(m) => {
            let _ = writeln!(out, "inverse_map present");
            put_complex_pmap(&mut out, "inverse", m);
        }
        None => {
            let _ = writeln!(out, "inverse_map absent");
        }
    }

    // polar form
    let _ = writeln!(out, "polar {}", model.polar.pairs.len());
    for pair in &model.polar.pairs {
        let _ = write!(out, "pair");
        put_c(&mut out, pair.lambda);
        let _ = write!(out, " {}", pair.terms.len());
        out.push('\n');
        for term in &pair.terms {
            let _ = write!(out, "term");
            put_c(&mut out, term.coeff);
            for &e in &term.rho_exp {
                let _ = write!(out, " {e}");
            }
            for &p in &term.phase {
                let _ = write!(out, " {p}");
            }
            out.push('\n');
        }
    }

    put_f64_list(&mut out, "training_nmte", &model.training_nmte);
    put_f64_list(&mut out, "training_amplitude", &[model.training_amplitude]);
    let _ = writeln!(out, "end");
    out
}

pub fn save(path: &Path, model: &FullModel, meta: &ArchiveMeta) -> Result<()> {
    std::fs::write(path, to_string(model, meta))?;
    Ok(())
}

struct Tokens<'a> {
    toks: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens {
            toks: text.split_whitespace().collect(),
            pos: 0,
        }
    }
    fn next(&mut self) -> Result<&'a str> {
        let t = self
            .toks
            .get(self.pos)
            .ok_or_else(|| Error::Data("archive truncated".into()))?;
        self.pos += 1;
        Ok(t)
    }
    fn expect(&mut self, tag: &str) -> Result<()> {
        let t = self.next()?;
        if t != tag {
            return Err(Error::Data(format!(
                "corrupt archive: expected '{tag}', found '{t}'"
            )));
        }
        Ok(())
    }
    fn usize(&mut self) -> Result<usize> {
        self.next()?
            .parse()
            .map_err(|e| Error::Data(format!("corrupt archive: {e}")))
    }
    fn u32(&mut self) -> Result<u32> {
        self.next()?
            .parse()
            .map_err(|e| Error::Data(format!("corrupt archive: {e}")))
    }
    fn i32(&mut self) -> Result<i32> {
        self.next()?
            .parse()
            .map_err(|e| Error::Data(format!("corrupt archive: {e}")))
    }
    fn f64(&mut self) -> Result<f64> {
        let t = self.next()?;
        let bits = u64::from_str_radix(t, 16)
            .map_err(|e| Error::Data(format!("corrupt archive float '{t}': {e}")))?;
        Ok(f64::from_bits(bits))
    }
    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
    fn real_matrix(&mut self, tag: &str) -> Result<DMatrix<f64>> {
        self.expect("mat")?;
        self.expect(tag)?;
        let rows = self.usize()?;
        let cols = self.usize()?;
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }
    fn complex_matrix(&mut self, tag: &str) -> Result<DMatrix<Complex64>> {
        self.expect("cmat")?;
        self.expect(tag)?;
        let rows = self.usize()?;
        let cols = self.usize()?;
        let mut m = DMatrix::from_element(rows, cols, Complex64::new(0.0, 0.0));
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.c64()?;
            }
        }
        Ok(m)
    }
    fn real_pmap(&mut self, tag: &str) -> Result<PolyMap<f64>> {
        self.expect("pmap")?;
        self.expect(tag)?;
        let d = self.usize()?;
        let lo = self.u32()?;
        let hi = self.u32()?;
        let coeffs = self.real_matrix("coeffs")?;
        PolyMap::new(enumerate_monomials(d, lo, hi)?, coeffs)
    }
    fn complex_pmap(&mut self, tag: &str) -> Result<PolyMap<Complex64>> {
        self.expect("cpmap")?;
        self.expect(tag)?;
        let d = self.usize()?;
        let lo = self.u32()?;
        let hi = self.u32()?;
        let coeffs = self.complex_matrix("coeffs")?;
        PolyMap::new(enumerate_monomials(d, lo, hi)?, coeffs)
    }
    fn f64_list(&mut self, tag: &str) -> Result<Vec<f64>> {
        self.expect("flist")?;
        self.expect(tag)?;
        let n = self.usize()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Parses an archive back into the model and its provenance.
pub fn from_str(text: &str) -> Result<(FullModel, ArchiveMeta)> {
    let mut t = Tokens::new(text);
    t.expect("ssmrom-archive")?;
    let version = t.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Config(format!(
            "unknown archive version {version}; this tool reads version {ARCHIVE_VERSION}"
        )));
    }
    t.expect("tool")?;
    let tool_version = t.next()?.to_string();
    t.expect("config_hash")?;
    let config_hash = u64::from_str_radix(t.next()?, 16)
        .map_err(|e| Error::Data(format!("corrupt config hash: {e}")))?;
    t.expect("stamp")?;
    let stamp_tok = t.next()?;
    let stamp = if stamp_tok == "-" {
        String::new()
    } else {
        let bytes: Result<Vec<u8>> = (0..stamp_tok.len() / 2)
            .map(|i| {
                u8::from_str_radix(&stamp_tok[2 * i..2 * i + 2], 16)
                    .map_err(|e| Error::Data(format!("corrupt stamp: {e}")))
            })
            .collect();
        String::from_utf8(bytes?).map_err(|e| Error::Data(format!("corrupt stamp: {e}")))?
    };
    t.expect("ordering")?;
    let ordering = t.next()?;
    if ordering != ORDERING_TAG {
        return Err(Error::Config(format!(
            "archive uses monomial ordering '{ordering}', this tool expects '{ORDERING_TAG}'"
        )));
    }
    t.expect("embedding")?;
    let p = t.usize()?;
    let k = t.usize()?;
    let dt = t.f64()?;
    let embedding = EmbeddingConfig::new(p, k, dt)?;
    t.expect("n_obs")?;
    let n_obs = t.usize()?;

    let tangent = t.real_matrix("tangent")?;
    let param = t.real_pmap("param")?;
    let singular_values = t.f64_list("singular_values")?;
    let scale_factors = t.f64_list("scale_factors")?;
    let mdiag = t.f64_list("manifold_diag")?;
    if mdiag.len() != 3 {
        return Err(Error::Data("corrupt manifold diagnostics".into()));
    }
    let ssm = SsmModel::from_parts(
        tangent,
        param,
        TangentDiagnostics {
            singular_values,
            energy_captured: mdiag[0],
            scale_factors,
        },
        mdiag[1],
        mdiag[2],
    )?;

    let dynamics = t.real_pmap("dynamics")?;
    let eigvecs = t.complex_matrix("eigvecs")?;
    let lambda_mat = t.complex_matrix("lambda")?;
    let lambda: Vec<Complex64> = lambda_mat.iter().cloned().collect();
    let modal = t.complex_pmap("modal")?;
    let dyn_res = t.f64_list("dynamics_residual")?;
    let reduced = ReducedModel::from_parts(
        dynamics,
        eigvecs,
        lambda.clone(),
        modal,
        dyn_res.first().copied().unwrap_or(0.0),
    )?;

    let nf_dynamics = t.complex_pmap("nf_dynamics")?;
    let nf_transform = t.complex_pmap("nf_transform")?;
    t.expect("resonances")?;
    let n_res = t.usize()?;
    let d = lambda.len();
    let mut resonances = Vec::with_capacity(n_res);
    for _ in 0..n_res {
        t.expect("res")?;
        let row = t.usize()?;
        let exps: Result<Vec<u32>> = (0..d).map(|_| t.u32()).collect();
        resonances.push((row, exps?));
    }
    t.expect("nf_options")?;
    let criterion = match t.next()? {
        "imaginary" => ResonanceCriterion::ImaginaryOnly,
        "full" => ResonanceCriterion::FullComplex,
        other => {
            return Err(Error::Data(format!(
                "unknown resonance criterion '{other}'"
            )))
        }
    };
    let tol_res = t.f64()?;
    t.expect("inverse_map")?;
    let inverse_map = match t.next()? {
        "present" => Some(t.complex_pmap("inverse")?),
        "absent" => None,
        other => return Err(Error::Data(format!("corrupt inverse flag '{other}'"))),
    };
    let normal_form = NormalFormModel::from_parts(
        lambda,
        nf_dynamics,
        nf_transform,
        resonances,
        ResonanceOptions { tol_res, criterion },
        inverse_map,
    );

    t.expect("polar")?;
    let n_pairs = t.usize()?;
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        t.expect("pair")?;
        let lam = t.c64()?;
        let n_terms = t.usize()?;
        let mut terms = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            t.expect("term")?;
            let coeff = t.c64()?;
            let rho_exp: Result<Vec<u32>> = (0..n_pairs).map(|_| t.u32()).collect();
            let phase: Result<Vec<i32>> = (0..n_pairs).map(|_| t.i32()).collect();
            terms.push(PolarTerm {
                coeff,
                rho_exp: rho_exp?,
                phase: phase?,
            });
        }
        pairs.push(PolarPair { lambda: lam, terms });
    }
    let polar = PolarForm { pairs };

    let training_nmte = t.f64_list("training_nmte")?;
    let amp = t.f64_list("training_amplitude")?;
    t.expect("end")?;

    let model = FullModel {
        embedding,
        n_obs,
        ssm,
        reduced,
        normal_form,
        polar,
        training_nmte,
        training_amplitude: amp.first().copied().unwrap_or(0.0),
    };
    model.validate()?;
    Ok((
        model,
        ArchiveMeta {
            tool_version,
            config_hash,
            stamp,
        },
    ))
}

pub fn load(path: &Path) -> Result<(FullModel, ArchiveMeta)> {
    let text = std::fs::read_to_string(path)?;
    from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_version_rejected() {
        let text = "ssmrom-archive 99\n";
        match from_str(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("version 99"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), fnv1a64(b"a"));
        assert_ne!(fnv1a64(b"a"), fnv1a64(b"b"));
    }
}
