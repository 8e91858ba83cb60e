//! JSON documents for systems, designs and reports, plus a Matrix Market reader.
//!
//! Complex entries are always written as two-element `[re, im]` arrays.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condensed::{EliminatedCondensedForm, PatternResidual, UnitaryCondensedForm};
use crate::error::{Error, Result};
use crate::model::{DescriptorSystem, GeneratorRecipe, PhGenerator};
use crate::numeric::linalg::is_finite as is_finite_matrix;
use crate::numeric::{c, zeros, ComplexMatrix, ToleranceProfile};
use crate::synthesis::{DesignPolicy, FeedbackDesign, Provenance};
use crate::verify::{AnalysisReport, StructureCheck};

pub const REPORT_SCHEMA: &str = "phstab-report/1";
pub const DESIGN_SCHEMA: &str = "phstab-design/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Row-major nested arrays of `[re, im]` pairs.
pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

pub fn to_json_matrix(m: &ComplexMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn from_json_matrix(name: &str, rows: &JsonMatrix, nrows: usize, ncols: usize) -> Result<ComplexMatrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!(
            "matrix {name} must be {nrows} x {ncols}, got {} rows with lengths {:?}",
            rows.len(),
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let m = ComplexMatrix::from_fn(nrows, ncols, |i, j| c(rows[i][j][0], rows[i][j][1]));
    if !is_finite_matrix(&m) {
        return Err(Error::Parse(format!("matrix {name} has non-finite entries")));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    #[serde(rename = "J")]
    pub j: JsonMatrix,
    #[serde(rename = "R")]
    pub r: JsonMatrix,
    #[serde(rename = "Q")]
    pub q: JsonMatrix,
    #[serde(rename = "G")]
    pub g: JsonMatrix,
    #[serde(rename = "P")]
    pub p: JsonMatrix,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<GeneratorRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "E")]
    pub e: JsonMatrix,
    #[serde(rename = "A")]
    pub a: JsonMatrix,
    #[serde(rename = "B")]
    pub b: JsonMatrix,
    #[serde(rename = "C")]
    pub c: JsonMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

impl SystemFile {
    pub fn from_system(sys: &DescriptorSystem) -> Self {
        Self {
            n: sys.n(),
            m: sys.m(),
            e: to_json_matrix(&sys.e),
            a: to_json_matrix(&sys.a),
            b: to_json_matrix(&sys.b),
            c: to_json_matrix(&sys.c),
            oracle: None,
            meta: None,
        }
    }

    /// System realized from `g` with the generator attached as oracle.
    pub fn from_generator(g: &PhGenerator, tol: &ToleranceProfile, meta: Option<Meta>) -> Result<Self> {
        let sys = g.realize(tol)?;
        let mut f = Self::from_system(&sys);
        f.oracle = Some(OracleFile {
            j: to_json_matrix(&g.j),
            r: to_json_matrix(&g.r),
            q: to_json_matrix(&g.q),
            g: to_json_matrix(&g.g),
            p: to_json_matrix(&g.p),
        });
        f.meta = meta;
        Ok(f)
    }

    pub fn system(&self) -> Result<DescriptorSystem> {
        let (n, m) = (self.n, self.m);
        DescriptorSystem::new(
            from_json_matrix("E", &self.e, n, n)?,
            from_json_matrix("A", &self.a, n, n)?,
            from_json_matrix("B", &self.b, n, m)?,
            from_json_matrix("C", &self.c, m, n)?,
        )
        .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn generator(&self) -> Result<Option<PhGenerator>> {
        let Some(o) = &self.oracle else {
            return Ok(None);
        };
        let (n, m) = (self.n, self.m);
        Ok(Some(PhGenerator {
            e: from_json_matrix("E", &self.e, n, n)?,
            j: from_json_matrix("J", &o.j, n, n)?,
            r: from_json_matrix("R", &o.r, n, n)?,
            q: from_json_matrix("Q", &o.q, n, n)?,
            g: from_json_matrix("G", &o.g, n, m)?,
            p: from_json_matrix("P", &o.p, n, m)?,
        }))
    }
}

/// Schema-versioned envelope for any report body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub schema: String,
    pub tool_version: String,
    pub tolerances: ToleranceProfile,
    pub report: T,
}

impl<T> ReportFile<T> {
    pub fn new(report: T, tol: &ToleranceProfile) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            tool_version: TOOL_VERSION.into(),
            tolerances: *tol,
            report,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub schema: String,
    pub tool_version: String,
    pub provenance: Provenance,
    pub target_r: Option<usize>,
    pub achieved_r: usize,
    pub policy: DesignPolicy,
    #[serde(rename = "K")]
    pub k: JsonMatrix,
    #[serde(rename = "F")]
    pub f: JsonMatrix,
    #[serde(rename = "closed_E")]
    pub closed_e: JsonMatrix,
    #[serde(rename = "closed_A")]
    pub closed_a: JsonMatrix,
    pub report: AnalysisReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureCheck>,
}

impl DesignFile {
    pub fn new(design: &FeedbackDesign, policy: DesignPolicy, report: AnalysisReport, structure: Option<StructureCheck>) -> Self {
        Self {
            schema: DESIGN_SCHEMA.into(),
            tool_version: TOOL_VERSION.into(),
            provenance: design.provenance,
            target_r: design.target_r,
            achieved_r: design.achieved_r,
            policy,
            k: to_json_matrix(&design.k),
            f: to_json_matrix(&design.f),
            closed_e: to_json_matrix(&design.closed_e),
            closed_a: to_json_matrix(&design.closed_a),
            report,
            structure,
        }
    }

    pub fn design(&self, n: usize, m: usize) -> Result<FeedbackDesign> {
        if self.schema != DESIGN_SCHEMA {
            return Err(Error::Parse(format!("unsupported design schema {:?}", self.schema)));
        }
        Ok(FeedbackDesign {
            k: from_json_matrix("K", &self.k, m, m)?,
            f: from_json_matrix("F", &self.f, m, m)?,
            target_r: self.target_r,
            achieved_r: self.achieved_r,
            closed_e: from_json_matrix("closed_E", &self.closed_e, n, n)?,
            closed_a: from_json_matrix("closed_A", &self.closed_a, n, n)?,
            provenance: self.provenance,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminatedFile {
    #[serde(rename = "S")]
    pub s: JsonMatrix,
    #[serde(rename = "T")]
    pub t: JsonMatrix,
    #[serde(rename = "E")]
    pub e: JsonMatrix,
    #[serde(rename = "A")]
    pub a: JsonMatrix,
    #[serde(rename = "B")]
    pub b: JsonMatrix,
    #[serde(rename = "C")]
    pub c: JsonMatrix,
    #[serde(rename = "cond_S")]
    pub cond_s: f64,
    #[serde(rename = "cond_T")]
    pub cond_t: f64,
    pub residuals: Vec<PatternResidual>,
}

/// Condensed coordinates: `U E V`, `U A V`, `U B W`, `W^H C V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondensedFile {
    pub dims: [usize; 5],
    pub m1: usize,
    #[serde(rename = "U")]
    pub u: JsonMatrix,
    #[serde(rename = "V")]
    pub v: JsonMatrix,
    #[serde(rename = "W")]
    pub w: JsonMatrix,
    #[serde(rename = "E")]
    pub e: JsonMatrix,
    #[serde(rename = "A")]
    pub a: JsonMatrix,
    #[serde(rename = "B")]
    pub b: JsonMatrix,
    #[serde(rename = "C")]
    pub c: JsonMatrix,
    pub unitarity_residual: f64,
    pub residuals: Vec<PatternResidual>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eliminated: Option<EliminatedFile>,
}

impl CondensedFile {
    pub fn new(u: &UnitaryCondensedForm, el: Option<&EliminatedCondensedForm>) -> Self {
        Self {
            dims: u.dims.as_array(),
            m1: u.dims.m1,
            u: to_json_matrix(&u.u),
            v: to_json_matrix(&u.v),
            w: to_json_matrix(&u.w),
            e: to_json_matrix(&u.e),
            a: to_json_matrix(&u.a),
            b: to_json_matrix(&u.b),
            c: to_json_matrix(&u.c),
            unitarity_residual: u.unitarity_residual(),
            residuals: u.residuals.clone(),
            eliminated: el.map(|x| EliminatedFile {
                s: to_json_matrix(&x.s),
                t: to_json_matrix(&x.t),
                e: to_json_matrix(&x.e),
                a: to_json_matrix(&x.a),
                b: to_json_matrix(&x.b),
                c: to_json_matrix(&x.c),
                cond_s: x.cond_s,
                cond_t: x.cond_t,
                residuals: x.residuals.clone(),
            }),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))
}

pub fn read_system_file(path: &Path) -> Result<SystemFile> {
    from_json(&read_text(path)?, &path.display().to_string())
}

/// Reads a dense matrix in Matrix Market `coordinate` or `array` format,
/// `complex` or `real`, `general` symmetry.
pub fn read_matrix_market(text: &str) -> Result<ComplexMatrix> {
    let bad = |msg: &str| Error::Parse(format!("matrix market: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(bad("missing %%MatrixMarket matrix header"));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(bad(&format!("unsupported format {other}"))),
    };
    let complex = match h[3].as_str() {
        "complex" => true,
        "real" => false,
        other => return Err(bad(&format!("unsupported field {other}"))),
    };
    if h[4] != "general" {
        return Err(bad("only general symmetry is supported"));
    }
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size: Vec<usize> = body
        .next()
        .ok_or_else(|| bad("missing size line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad size line")))
        .collect::<Result<_>>()?;
    let num = |t: Option<&str>| -> Result<f64> {
        t.ok_or_else(|| bad("truncated entry"))?
            .parse::<f64>()
            .map_err(|_| bad("bad number"))
    };
    let value = |toks: &mut std::str::SplitWhitespace| -> Result<crate::numeric::C64> {
        let re = num(toks.next())?;
        let im = if complex { num(toks.next())? } else { 0.0 };
        Ok(c(re, im))
    };
    let (rows, cols, mut m) = match (coordinate, size.as_slice()) {
        (true, [r, cl, _]) | (false, [r, cl]) => (*r, *cl, zeros(*r, *cl)),
        _ => return Err(bad("bad size line")),
    };
    if coordinate {
        let nnz = size[2];
        for _ in 0..nnz {
            let line = body.next().ok_or_else(|| bad("fewer entries than declared"))?;
            let mut toks = line.split_whitespace();
            let i: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad row index"))?;
            let j: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("bad column index"))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(bad("index out of range"));
            }
            m[(i - 1, j - 1)] += value(&mut toks)?;
        }
    } else {
        for j in 0..cols {
            for i in 0..rows {
                let line = body.next().ok_or_else(|| bad("fewer entries than declared"))?;
                m[(i, j)] = value(&mut line.split_whitespace())?;
            }
        }
    }
    if !is_finite_matrix(&m) {
        return Err(bad("non-finite entry"));
    }
    Ok(m)
}
