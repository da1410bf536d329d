//! On-disk formats: attribution matrices (CSV, MOIPHI), label tables, dense
//! and sparse weight matrices, edge lists and GraphML.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use moi_core::attribution::{AttributionMatrix, LabelTable};
use moi_core::community::Partition;
use moi_core::graph::ExplanationGraph;
use moi_core::Matrix;

use crate::error::{MoiError, Result};

pub const MOIPHI_MAGIC: &[u8; 8] = b"MOIPHI1\0";
pub const MOIWD_MAGIC: &[u8; 7] = b"MOIWD1\0";
pub const MOIWS_MAGIC: &[u8; 7] = b"MOIWS1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiFormat {
    Csv,
    Moiphi,
}

impl PhiFormat {
    /// `.csv` is CSV, everything else MOIPHI.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Moiphi,
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| MoiError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MoiError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| MoiError::io(path, e))?;
    f.write_all(bytes).map_err(|e| MoiError::io(path, e))
}

/// A numeric table with a header row, as used for `Φ`, data matrices and
/// counterfactual files.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub ids: Option<Vec<String>>,
    pub values: Matrix,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let bytes = read_bytes(path)?;
    parse_table(path, &bytes)
}

fn parse_table(path: &Path, bytes: &[u8]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| MoiError::format(path, e.to_string()))?.clone();
    let with_ids = header.get(0) == Some("instance_id");
    let names: Vec<String> = header.iter().skip(usize::from(with_ids)).map(str::to_string).collect();
    let width = header.len();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| MoiError::format(path, format!("row {row}: {e}")))?;
        if record.len() != width {
            return Err(MoiError::format(path, format!("row {row}: expected {width} fields")));
        }
        let mut fields = record.iter();
        if with_ids {
            ids.push(fields.next().unwrap_or_default().to_string());
        }
        for (c, field) in fields.enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| MoiError::format(path, format!("row {row}, column {}: cannot parse {field:?}", names[c])))?;
            if !v.is_finite() {
                return Err(MoiError::format(path, format!("row {row}, column {}: non-finite value", names[c])));
            }
            data.push(v);
        }
        rows += 1;
    }
    let values = Matrix::from_vec(rows, names.len(), data).map_err(|e| MoiError::format(path, e.to_string()))?;
    Ok(Table { names, ids: with_ids.then_some(ids), values })
}

pub fn table_bytes(names: &[String], ids: Option<&[String]>, values: &Matrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| MoiError::Data(e.to_string());
    let mut header: Vec<&str> = Vec::with_capacity(names.len() + 1);
    if ids.is_some() {
        header.push("instance_id");
    }
    header.extend(names.iter().map(String::as_str));
    w.write_record(&header).map_err(io)?;
    for s in 0..values.rows() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ids) = ids {
            record.push(ids[s].clone());
        }
        record.extend(values.row(s).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(io)?;
    }
    w.into_inner().map_err(|e| MoiError::Data(e.to_string()))
}

pub fn write_table(path: &Path, names: &[String], ids: Option<&[String]>, values: &Matrix) -> Result<()> {
    write_bytes(path, &table_bytes(names, ids, values)?)
}

fn to_attributions(path: &Path, table: Table) -> Result<AttributionMatrix> {
    AttributionMatrix::new(table.values, table.names, table.ids).map_err(|e| MoiError::format(path, e.to_string()))
}

pub fn read_phi_csv(path: &Path) -> Result<AttributionMatrix> {
    let table = read_table(path)?;
    to_attributions(path, table)
}

pub fn write_phi_csv(path: &Path, phi: &AttributionMatrix) -> Result<()> {
    write_table(path, phi.feature_names(), Some(phi.instance_ids()), phi.values())
}

pub fn moiphi_bytes(phi: &AttributionMatrix) -> Vec<u8> {
    let names = phi.feature_names().join("\n");
    let mut out = Vec::with_capacity(20 + names.len() + 8 * phi.n() * phi.d());
    out.extend_from_slice(MOIPHI_MAGIC);
    out.extend_from_slice(&(phi.n() as u32).to_le_bytes());
    out.extend_from_slice(&(phi.d() as u32).to_le_bytes());
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    out.extend_from_slice(names.as_bytes());
    for v in phi.values().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_moiphi(path: &Path, phi: &AttributionMatrix) -> Result<()> {
    write_bytes(path, &moiphi_bytes(phi))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(MoiError::format(self.path, format!("truncated at byte {}", self.at)));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len()).ok() != Some(magic) {
            return Err(MoiError::format(self.path, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(MoiError::format(self.path, format!("{} trailing bytes", self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

pub fn read_moiphi(path: &Path) -> Result<AttributionMatrix> {
    let bytes = read_bytes(path)?;
    let mut c = Cursor { path, bytes: &bytes, at: 0 };
    c.magic(MOIPHI_MAGIC)?;
    let n = c.u32()? as usize;
    let d = c.u32()? as usize;
    let name_len = c.u32()? as usize;
    let names = std::str::from_utf8(c.take(name_len)?).map_err(|e| MoiError::format(path, format!("feature names: {e}")))?;
    let names: Vec<String> = if d == 0 { Vec::new() } else { names.split('\n').map(str::to_string).collect() };
    if names.len() != d {
        return Err(MoiError::format(path, format!("expected {d} feature names, found {}", names.len())));
    }
    let count = n.checked_mul(d).ok_or_else(|| MoiError::format(path, "matrix too large"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(c.f64()?);
    }
    c.finish()?;
    let values = Matrix::from_vec(n, d, data).map_err(|e| MoiError::format(path, e.to_string()))?;
    AttributionMatrix::new(values, names, None).map_err(|e| MoiError::format(path, e.to_string()))
}

pub fn load_attributions(path: &Path, format: PhiFormat) -> Result<AttributionMatrix> {
    match format {
        PhiFormat::Csv => read_phi_csv(path),
        PhiFormat::Moiphi => read_moiphi(path),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| MoiError::format(path, e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(id_col), Some(group_col)) = (col("instance_id"), col("group")) else {
        return Err(MoiError::format(path, "label table needs instance_id and group columns"));
    };
    let (class_col, y_col, yhat_col) = (col("class"), col("y"), col("yhat"));
    let mut t = LabelTable {
        instance_ids: Vec::new(),
        group: Vec::new(),
        class: class_col.map(|_| Vec::new()),
        y: y_col.map(|_| Vec::new()),
        yhat: yhat_col.map(|_| Vec::new()),
    };
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| MoiError::format(path, format!("row {row}: {e}")))?;
        let field = |c: usize| record.get(c).unwrap_or_default();
        let number = |c: usize, name: &str| -> Result<f64> {
            field(c).trim().parse().map_err(|_| MoiError::format(path, format!("row {row}, column {name}: cannot parse {:?}", field(c))))
        };
        t.instance_ids.push(field(id_col).to_string());
        t.group.push(field(group_col).to_string());
        if let (Some(c), Some(v)) = (class_col, t.class.as_mut()) {
            v.push(field(c).to_string());
        }
        if let Some(c) = y_col {
            let y = number(c, "y")?;
            t.y.as_mut().expect("y column").push(y);
        }
        if let Some(c) = yhat_col {
            let y = number(c, "yhat")?;
            t.yhat.as_mut().expect("yhat column").push(y);
        }
    }
    Ok(t)
}

pub fn write_labels(path: &Path, t: &LabelTable) -> Result<()> {
    write_bytes(path, &labels_bytes(t)?)
}

pub fn labels_bytes(t: &LabelTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| MoiError::Data(e.to_string());
    let mut header = vec!["instance_id", "group"];
    if t.class.is_some() {
        header.push("class");
    }
    if t.y.is_some() {
        header.push("y");
    }
    if t.yhat.is_some() {
        header.push("yhat");
    }
    w.write_record(&header).map_err(err)?;
    for s in 0..t.instance_ids.len() {
        let mut rec = vec![t.instance_ids[s].clone(), t.group[s].clone()];
        if let Some(c) = &t.class {
            rec.push(c[s].clone());
        }
        if let Some(y) = &t.y {
            rec.push(y[s].to_string());
        }
        if let Some(y) = &t.yhat {
            rec.push(y[s].to_string());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| MoiError::Data(e.to_string()))
}

pub fn moiwd_bytes(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(11 + 8 * m.as_slice().len());
    out.extend_from_slice(MOIWD_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_moiwd(path: &Path, m: &Matrix) -> Result<()> {
    if m.rows() != m.cols() {
        return Err(MoiError::Data(format!("dense weight matrix must be square, found {}x{}", m.rows(), m.cols())));
    }
    write_bytes(path, &moiwd_bytes(m))
}

pub fn read_moiwd(path: &Path) -> Result<Matrix> {
    let bytes = read_bytes(path)?;
    let mut c = Cursor { path, bytes: &bytes, at: 0 };
    c.magic(MOIWD_MAGIC)?;
    let d = c.u32()? as usize;
    let mut data = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        data.push(c.f64()?);
    }
    c.finish()?;
    Matrix::from_vec(d, d, data).map_err(|e| MoiError::format(path, e.to_string()))
}

pub fn moiws_bytes(g: &ExplanationGraph) -> Vec<u8> {
    let edges = g.edges();
    let mut out = Vec::with_capacity(19 + 16 * edges.len());
    out.extend_from_slice(MOIWS_MAGIC);
    out.extend_from_slice(&(g.d() as u32).to_le_bytes());
    out.extend_from_slice(&(edges.len() as u64).to_le_bytes());
    for (i, j, w) in edges {
        out.extend_from_slice(&(i as u32).to_le_bytes());
        out.extend_from_slice(&(j as u32).to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn write_moiws(path: &Path, g: &ExplanationGraph) -> Result<()> {
    write_bytes(path, &moiws_bytes(g))
}

/// Reads the edge set; construction metadata travels separately.
pub fn read_moiws(path: &Path) -> Result<ExplanationGraph> {
    let bytes = read_bytes(path)?;
    let mut c = Cursor { path, bytes: &bytes, at: 0 };
    c.magic(MOIWS_MAGIC)?;
    let d = c.u32()? as usize;
    let nnz = c.u64()?;
    let mut edges = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for _ in 0..nnz {
        let i = c.u32()? as usize;
        let j = c.u32()? as usize;
        let w = c.f64()?;
        if i >= j || j >= d {
            return Err(MoiError::format(path, format!("edge ({i}, {j}) must satisfy i < j < {d}")));
        }
        if last.is_some_and(|l| l >= (i, j)) {
            return Err(MoiError::format(path, "edges are not sorted lexicographically"));
        }
        last = Some((i, j));
        edges.push((i, j, w));
    }
    c.finish()?;
    ExplanationGraph::from_edges(d, &edges).map_err(|e| MoiError::format(path, e.to_string()))
}

pub fn edge_tsv(g: &ExplanationGraph, names: &[String]) -> String {
    let mut out = String::from("src\tdst\tweight\n");
    for (i, j, w) in g.edges() {
        let _ = writeln!(out, "{}\t{}\t{w}", names[i], names[j]);
    }
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

pub fn graphml(g: &ExplanationGraph, names: &[String], partition: Option<&Partition>) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    out.push_str("  <key id=\"name\" for=\"node\" attr.name=\"name\" attr.type=\"string\"/>\n");
    if partition.is_some() {
        out.push_str("  <key id=\"module\" for=\"node\" attr.name=\"module\" attr.type=\"int\"/>\n");
    }
    out.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n");
    out.push_str("  <graph id=\"G\" edgedefault=\"undirected\">\n");
    for (i, name) in names.iter().enumerate().take(g.d()) {
        let _ = write!(out, "    <node id=\"n{i}\"><data key=\"name\">{}</data>", xml_escape(name));
        if let Some(p) = partition {
            let _ = write!(out, "<data key=\"module\">{}</data>", p.module_of(i));
        }
        out.push_str("</node>\n");
    }
    for (i, j, w) in g.edges() {
        let _ = writeln!(out, "    <edge source=\"n{i}\" target=\"n{j}\"><data key=\"weight\">{w}</data></edge>");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn read_predictions(path: &Path) -> Result<Vec<f64>> {
    let table = read_table(path)?;
    if table.names.len() != 1 || table.names[0] != "prediction" {
        return Err(MoiError::format(path, "prediction files have a single \"prediction\" column"));
    }
    Ok(table.values.into_vec())
}

pub fn write_predictions(path: &Path, predictions: &[f64]) -> Result<()> {
    let m = Matrix::from_vec(predictions.len(), 1, predictions.to_vec())?;
    write_table(path, &["prediction".to_string()], None, &m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parse_and_ragged_row() {
        let p = Path::new("phi.csv");
        let t = parse_table(p, b"f0,f1\n1.0,-2.0\n0.5,0.5").unwrap();
        assert_eq!(t.values.as_slice(), &[1.0, -2.0, 0.5, 0.5]);
        assert!(t.ids.is_none());
        let err = parse_table(p, b"f0,f1\n1.0,2.0,3.0\n").unwrap_err();
        assert!(err.to_string().ends_with("row 1: expected 2 fields"), "{err}");
        let err = parse_table(p, b"f0,f1\n1.0,inf\n").unwrap_err();
        assert!(err.to_string().contains("column f1"), "{err}");
    }

    #[test]
    fn instance_id_column_detected() {
        let t = parse_table(Path::new("x.csv"), b"instance_id,a,b\nu,1,2\nv,3,4\n").unwrap();
        assert_eq!(t.ids.unwrap(), vec!["u", "v"]);
        assert_eq!(t.names, vec!["a", "b"]);
    }

    #[test]
    fn graphml_escapes_names() {
        let g = ExplanationGraph::from_edges(2, &[(0, 1, 0.5)]).unwrap();
        let s = graphml(&g, &["a<b".into(), "c".into()], Some(&Partition::new(&[0, 1])));
        assert!(s.contains("a&lt;b") && s.contains("<data key=\"module\">1</data>"));
    }
}
