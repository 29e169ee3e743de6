//! Matrix Market readers and writers plus directory-level export/import of
//! algebraic hierarchies (matrices, prolongations, right-hand side, and a
//! JSON metadata sidecar).
//!
//! Values are written in scientific notation with 17 significant digits,
//! so every `f64` survives a write/read cycle bit-exactly. Parse failures
//! carry the file name and one-based line number.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::la::SparseMatrix;
use crate::mesh::domain_ratio;
use crate::problem::Problem;
use crate::solver::lambda_min_lower_bound;
use crate::{Error, Result};

/// Largest entrywise deviation from symmetry accepted for imported
/// stiffness matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a symmetric sparse matrix in coordinate format, storing the lower
/// triangle only.
pub fn write_matrix_symmetric(path: &Path, m: &SparseMatrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            what: "symmetric matrix must be square",
            expected: m.rows(),
            got: m.cols(),
        });
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    let nnz = m.iter_entries().filter(|&(i, j, _)| j <= i).count();
    writeln!(out, "{} {} {}", m.rows(), m.cols(), nnz)?;
    for (i, j, v) in m.iter_entries() {
        if j <= i {
            writeln!(out, "{} {} {}", i + 1, j + 1, fmt_f64(v))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Write a sparse matrix in coordinate format with all entries.
pub fn write_matrix_general(path: &Path, m: &SparseMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    let nnz = m.iter_entries().count();
    writeln!(out, "{} {} {}", m.rows(), m.cols(), nnz)?;
    for (i, j, v) in m.iter_entries() {
        writeln!(out, "{} {} {}", i + 1, j + 1, fmt_f64(v))?;
    }
    out.flush()?;
    Ok(())
}

/// Write a dense vector as an n-by-1 array.
pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "%%MatrixMarket matrix array real general")?;
    writeln!(out, "{} 1", v.len())?;
    for x in v {
        writeln!(out, "{}", fmt_f64(*x))?;
    }
    out.flush()?;
    Ok(())
}

struct MmHeader {
    format: String,
    symmetry: String,
}

/// Lines of a Matrix Market file with comments stripped, each paired with
/// its one-based line number.
fn mm_lines(path: &Path) -> Result<(MmHeader, Vec<(usize, String)>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = banner.split_whitespace().collect();
    if fields.len() != 5
        || fields[0] != "%%MatrixMarket"
        || fields[1] != "matrix"
        || fields[3] != "real"
    {
        return Err(parse_err(
            path,
            1,
            format!("unsupported banner '{banner}' (expected a real matrix)"),
        ));
    }
    let header = MmHeader {
        format: fields[2].to_string(),
        symmetry: fields[4].to_string(),
    };
    let mut rest = Vec::new();
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        rest.push((idx + 1, trimmed.to_string()));
    }
    if rest.is_empty() {
        return Err(parse_err(path, 1, "missing size line"));
    }
    Ok((header, rest))
}

fn parse_num<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    token: &str,
    what: &str,
) -> Result<T> {
    token
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} '{token}'")))
}

/// Read a sparse matrix in coordinate format; symmetric storage is expanded
/// to both triangles.
pub fn read_matrix(path: &Path) -> Result<SparseMatrix> {
    let (header, lines) = mm_lines(path)?;
    if header.format != "coordinate" {
        return Err(parse_err(
            path,
            1,
            format!("expected coordinate format, found '{}'", header.format),
        ));
    }
    let symmetric = match header.symmetry.as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(parse_err(
                path,
                1,
                format!("unsupported symmetry '{other}'"),
            ))
        }
    };
    let (size_line, size) = &lines[0];
    let tokens: Vec<&str> = size.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(parse_err(path, *size_line, "size line needs rows cols nnz"));
    }
    let rows: usize = parse_num(path, *size_line, tokens[0], "row count")?;
    let cols: usize = parse_num(path, *size_line, tokens[1], "column count")?;
    let nnz: usize = parse_num(path, *size_line, tokens[2], "entry count")?;
    if lines.len() - 1 != nnz {
        let last = lines.last().map(|(n, _)| *n).unwrap_or(*size_line);
        return Err(parse_err(
            path,
            last,
            format!("expected {nnz} entries, found {}", lines.len() - 1),
        ));
    }
    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    for (line_no, line) in &lines[1..] {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(parse_err(path, *line_no, "entry needs row col value"));
        }
        let i: usize = parse_num(path, *line_no, tokens[0], "row index")?;
        let j: usize = parse_num(path, *line_no, tokens[1], "column index")?;
        let v: f64 = parse_num(path, *line_no, tokens[2], "value")?;
        if i == 0 || i > rows || j == 0 || j > cols {
            return Err(parse_err(
                path,
                *line_no,
                format!("index ({i}, {j}) outside {rows} x {cols}"),
            ));
        }
        if !v.is_finite() {
            return Err(parse_err(path, *line_no, "non-finite value"));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    Ok(SparseMatrix::from_triplets(rows, cols, triplets))
}

/// Read a dense vector stored as an n-by-1 array.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let (header, lines) = mm_lines(path)?;
    if header.format != "array" || header.symmetry != "general" {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected a general array, found '{} {}'",
                header.format, header.symmetry
            ),
        ));
    }
    let (size_line, size) = &lines[0];
    let tokens: Vec<&str> = size.split_whitespace().collect();
    if tokens.len() != 2 {
        return Err(parse_err(path, *size_line, "size line needs rows cols"));
    }
    let rows: usize = parse_num(path, *size_line, tokens[0], "row count")?;
    let cols: usize = parse_num(path, *size_line, tokens[1], "column count")?;
    if cols != 1 {
        return Err(parse_err(path, *size_line, "expected a single column"));
    }
    if lines.len() - 1 != rows {
        let last = lines.last().map(|(n, _)| *n).unwrap_or(*size_line);
        return Err(parse_err(
            path,
            last,
            format!("expected {rows} values, found {}", lines.len() - 1),
        ));
    }
    let mut out = Vec::with_capacity(rows);
    for (line_no, line) in &lines[1..] {
        let v: f64 = parse_num(path, *line_no, line, "value")?;
        if !v.is_finite() {
            return Err(parse_err(path, *line_no, "non-finite value"));
        }
        out.push(v);
    }
    Ok(out)
}

/// Sidecar describing an exported hierarchy; every numeric parameter a
/// re-run needs is echoed here.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HierarchyMetadata {
    /// Number of levels, coarsest included.
    pub levels: usize,
    /// Free nodes per level, coarsest first.
    pub sizes: Vec<usize>,
    /// Squared domain diameter over the squared smallest coarse element
    /// diameter; coefficient of the diagonal coarse bound.
    pub ratio: Option<f64>,
    /// Lower bound on the smallest eigenvalue of the coarsest matrix, for
    /// the adaptive coarse solve.
    pub lambda_min_lb: Option<f64>,
    pub dim: Option<usize>,
    pub cells0: Option<usize>,
}

/// An externally supplied (or re-imported) hierarchy: matrices and
/// transfers only, no mesh. Fine terms are then restricted to the diagonal
/// form, which is the one the experiments use.
#[derive(Debug, Clone)]
pub struct AlgebraicHierarchy {
    /// Stiffness matrices, coarsest first.
    pub a: Vec<SparseMatrix>,
    /// Diagonals, either imported overrides or extracted from `a`.
    pub d: Vec<Vec<f64>>,
    /// `ps[j]` maps level `j` to level `j + 1`.
    pub ps: Vec<SparseMatrix>,
    /// Right-hand side on the finest level.
    pub rhs: Vec<f64>,
    pub metadata: HierarchyMetadata,
}

impl AlgebraicHierarchy {
    pub fn num_levels(&self) -> usize {
        self.a.len()
    }
}

fn matrix_name(j: usize) -> String {
    format!("a_{j}.mtx")
}

fn prolongation_name(j: usize) -> String {
    format!("p_{j}.mtx")
}

fn diagonal_name(j: usize) -> String {
    format!("d_{j}.mtx")
}

const RHS_NAME: &str = "rhs.mtx";
const METADATA_NAME: &str = "metadata.json";

/// Write a built problem as Matrix Market files plus metadata under `dir`,
/// returning the created paths. Diagonals are not written; they reproduce
/// exactly as the matrix diagonals on import.
pub fn export_problem(problem: &Problem, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (j, ops) in problem.ops.iter().enumerate() {
        let path = dir.join(matrix_name(j));
        write_matrix_symmetric(&path, &ops.a)?;
        files.push(path);
    }
    for (j, p) in problem.prolongations.iter().enumerate() {
        let path = dir.join(prolongation_name(j));
        write_matrix_general(&path, p)?;
        files.push(path);
    }
    let rhs_path = dir.join(RHS_NAME);
    write_vector(&rhs_path, &problem.rhs)?;
    files.push(rhs_path);
    let metadata = HierarchyMetadata {
        levels: problem.num_levels(),
        sizes: problem.ops.iter().map(|o| o.a.rows()).collect(),
        ratio: Some(domain_ratio(&problem.hierarchy)),
        lambda_min_lb: Some(lambda_min_lower_bound(&problem.hierarchy)?),
        dim: Some(problem.hierarchy.dim),
        cells0: Some(problem.hierarchy.cells0),
    };
    let meta_path = dir.join(METADATA_NAME);
    let mut buf = serde_json::to_vec_pretty(&metadata)
        .map_err(|e| Error::InvalidParameter(format!("serialize metadata: {e}")))?;
    buf.push(b'\n');
    fs::write(&meta_path, buf)?;
    files.push(meta_path);
    Ok(files)
}

/// Read a hierarchy directory back, validating symmetry of every matrix and
/// dimensional consistency of the whole chain.
pub fn import_hierarchy(dir: &Path) -> Result<AlgebraicHierarchy> {
    let meta_path = dir.join(METADATA_NAME);
    let meta_text = fs::read_to_string(&meta_path)?;
    let metadata: HierarchyMetadata = serde_json::from_str(&meta_text).map_err(|e| {
        parse_err(&meta_path, e.line().max(1), format!("metadata: {e}"))
    })?;
    if metadata.levels == 0 {
        return Err(parse_err(&meta_path, 1, "levels must be at least 1"));
    }
    let mut a = Vec::with_capacity(metadata.levels);
    for j in 0..metadata.levels {
        let path = dir.join(matrix_name(j));
        let m = read_matrix(&path)?;
        if m.rows() != m.cols() {
            return Err(Error::InvalidParameter(format!(
                "{}: level {j} matrix is {} x {}, expected square",
                path.display(),
                m.rows(),
                m.cols()
            )));
        }
        let asym = m.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidParameter(format!(
                "{}: level {j} matrix deviates from symmetry by {asym:e} \
                 (tolerance {SYMMETRY_TOL:e})",
                path.display()
            )));
        }
        a.push(m);
    }
    let mut ps = Vec::with_capacity(metadata.levels - 1);
    for j in 0..metadata.levels - 1 {
        let path = dir.join(prolongation_name(j));
        let p = read_matrix(&path)?;
        if p.cols() != a[j].rows() || p.rows() != a[j + 1].rows() {
            return Err(Error::InvalidParameter(format!(
                "{}: prolongation from level {j} to level {} is {} x {}, \
                 expected {} x {}",
                path.display(),
                j + 1,
                p.rows(),
                p.cols(),
                a[j + 1].rows(),
                a[j].rows()
            )));
        }
        ps.push(p);
    }
    let rhs_path = dir.join(RHS_NAME);
    let rhs = read_vector(&rhs_path)?;
    let finest = a.len() - 1;
    if rhs.len() != a[finest].rows() {
        return Err(Error::DimensionMismatch {
            what: "right-hand side length vs finest matrix",
            expected: a[finest].rows(),
            got: rhs.len(),
        });
    }
    let mut d = Vec::with_capacity(a.len());
    for (j, aj) in a.iter().enumerate() {
        let path = dir.join(diagonal_name(j));
        if path.exists() {
            let dj = read_vector(&path)?;
            if dj.len() != aj.rows() {
                return Err(Error::DimensionMismatch {
                    what: "diagonal override length",
                    expected: aj.rows(),
                    got: dj.len(),
                });
            }
            d.push(dj);
        } else {
            d.push(aj.diagonal());
        }
    }
    if !metadata.sizes.is_empty() {
        for (j, (&size, aj)) in metadata.sizes.iter().zip(&a).enumerate() {
            if size != aj.rows() {
                return Err(Error::InvalidParameter(format!(
                    "metadata size {size} does not match level {j} matrix ({})",
                    aj.rows()
                )));
            }
        }
    }
    Ok(AlgebraicHierarchy {
        a,
        d,
        ps,
        rhs,
        metadata,
    })
}
