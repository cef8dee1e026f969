//! Nodes CSV and edges TSV.
//!
//! Nodes: a header `id,<feature columns...>,sensitive,target` followed by
//! one row per node. Ids are arbitrary unique strings; node indices follow
//! file order. Edges: one `src dst` pair of ids per line, separated by
//! whitespace. Blank lines and lines starting with `#` are skipped.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fnrgnn_core::{Graph, Tensor};

use crate::error::{Error, Result};

/// What the loader dropped while reading the edges file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadWarnings {
    pub self_loops: usize,
    pub duplicate_edges: usize,
}

pub struct NodeTable {
    pub ids: Vec<String>,
    pub features: Tensor,
    pub sensitive: Vec<u8>,
    pub targets: Vec<f64>,
}

pub fn read_nodes(path: &Path) -> Result<NodeTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols = header.len();
    if cols < 4 || &header[0] != "id" || &header[cols - 2] != "sensitive" || &header[cols - 1] != "target" {
        return Err(parse_err(
            1,
            "header must be `id,<feature columns...>,sensitive,target` with at least one feature".into(),
        ));
    }
    let d = cols - 3;

    let mut table = NodeTable {
        ids: Vec::new(),
        features: Tensor::zeros(0, d),
        sensitive: Vec::new(),
        targets: Vec::new(),
    };
    let mut data = Vec::new();
    let mut seen = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].to_string();
        if seen.insert(id.clone(), line).is_some() {
            return Err(parse_err(line, format!("duplicate node id `{id}`")));
        }
        for c in 1..=d {
            let v: f64 = record[c].parse().map_err(|_| {
                parse_err(line, format!("feature `{}` is not a number: `{}`", &header[c], &record[c]))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("feature `{}` is not finite", &header[c])));
            }
            data.push(v);
        }
        let s = match &record[d + 1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(parse_err(line, format!("sensitive value must be 0 or 1, got `{other}`")))
            }
        };
        let y: f64 = record[d + 2]
            .parse()
            .map_err(|_| parse_err(line, format!("target is not a number: `{}`", &record[d + 2])))?;
        if !y.is_finite() {
            return Err(parse_err(line, "target is not finite".into()));
        }
        table.ids.push(id);
        table.sensitive.push(s);
        table.targets.push(y);
    }
    table.features = Tensor::from_vec(table.ids.len(), d, data)?;
    Ok(table)
}

pub fn read_edges(path: &Path, ids: &[String]) -> Result<(Vec<(usize, usize)>, LoadWarnings)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut edges = BTreeSet::new();
    let mut warnings = LoadWarnings::default();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line_no = k as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected `src dst`, got {} fields", fields.len()),
            });
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("unknown node id `{id}`"),
            })
        };
        let (a, b) = (lookup(fields[0])?, lookup(fields[1])?);
        if a == b {
            warnings.self_loops += 1;
        } else if !edges.insert((a.min(b), a.max(b))) {
            warnings.duplicate_edges += 1;
        }
    }
    Ok((edges.into_iter().collect(), warnings))
}

pub fn load_graph(nodes: &Path, edges: &Path) -> Result<(Graph, LoadWarnings)> {
    let table = read_nodes(nodes)?;
    let (edge_list, warnings) = read_edges(edges, &table.ids)?;
    let g = Graph::new(table.features, edge_list, table.sensitive, table.targets)?;
    Ok((g, warnings))
}

/// Writes nodes with ids `0..n` and features named `x0, x1, ...`. Floats
/// use the shortest representation that parses back to the same value.
pub fn write_nodes(path: &Path, g: &Graph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    let mut header = vec!["id".to_string()];
    header.extend((0..g.feature_dim()).map(|c| format!("x{c}")));
    header.push("sensitive".into());
    header.push("target".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..g.num_nodes() {
        row.clear();
        row.push(i.to_string());
        row.extend(g.features().row_slice(i).iter().map(|v| v.to_string()));
        row.push(g.sensitive()[i].to_string());
        row.push(g.targets()[i].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_edges(path: &Path, g: &Graph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &(a, b) in g.edges() {
        writeln!(w, "{a}\t{b}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
