//! CSV and JSON readers and writers.
//!
//! Edge lists have the endpoints in the first two columns; a column named
//! `w` holds weights (default 1) and any other columns are kept as named
//! numeric columns. Row numbers in errors count data rows from 1, header
//! excluded.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bipartite::{build_bipartite, BipartiteData, MatchedRow, Projection};
use crate::error::{NetError, Result};
use crate::graph::{build_graph, Graph};

/// Raw edge list in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTable {
    pub endpoint_names: (String, String),
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub w: Vec<f64>,
    /// Remaining numeric columns by header name, in file order.
    pub extra: Vec<(String, Vec<f64>)>,
}

impl EdgeTable {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn graph(&self) -> Result<Graph> {
        let rows: Vec<_> = (0..self.len())
            .map(|k| (self.a[k].as_str(), self.b[k].as_str(), self.w[k]))
            .collect();
        build_graph(&rows)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Outcome column plus every other extra column as covariates.
    pub fn outcome_and_covariates(&self, outcome: &str) -> Result<(DVector<f64>, DMatrix<f64>, Vec<String>)> {
        let y = self
            .column(outcome)
            .ok_or_else(|| NetError::MissingColumn(outcome.to_string()))?;
        let xs: Vec<_> = self.extra.iter().filter(|(n, _)| n != outcome).collect();
        let m = self.len();
        Ok((
            DVector::from_column_slice(y),
            DMatrix::from_fn(m, xs.len(), |e, k| xs[k].1[e]),
            xs.iter().map(|(n, _)| n.clone()).collect(),
        ))
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn parse_num(field: &str, row: usize, col: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| NetError::Parse {
        row,
        message: format!("column `{col}`: cannot parse {field:?} as a number"),
    })
}

pub fn read_edge_table<R: Read>(r: R) -> Result<EdgeTable> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(NetError::MissingColumn("second endpoint".into()));
    }
    let w_col = headers.iter().position(|h| h == "w");
    let extra_cols: Vec<usize> = (2..headers.len()).filter(|&c| Some(c) != w_col).collect();
    let mut t = EdgeTable {
        endpoint_names: (headers[0].to_string(), headers[1].to_string()),
        a: Vec::new(),
        b: Vec::new(),
        w: Vec::new(),
        extra: extra_cols.iter().map(|&c| (headers[c].to_string(), Vec::new())).collect(),
    };
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| NetError::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(NetError::Parse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for c in [0, 1] {
            if rec[c].is_empty() {
                return Err(NetError::Parse {
                    row,
                    message: format!("empty vertex id in column `{}`", &headers[c]),
                });
            }
        }
        t.a.push(rec[0].to_string());
        t.b.push(rec[1].to_string());
        t.w.push(match w_col {
            Some(c) => parse_num(&rec[c], row, "w")?,
            None => 1.0,
        });
        for (slot, &c) in t.extra.iter_mut().zip(&extra_cols) {
            slot.1.push(parse_num(&rec[c], row, &headers[c])?);
        }
    }
    if t.is_empty() {
        return Err(NetError::EmptyEdgeList);
    }
    Ok(t)
}

pub fn read_edges<R: Read>(r: R) -> Result<Graph> {
    read_edge_table(r)?.graph()
}

/// Writes `i,j,w` using vertex labels, in the orientation the graph was read.
pub fn write_edges<W: Write>(g: &Graph, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["i", "j", "w"])?;
    for (e, s) in g.edges().iter().zip(g.swapped()) {
        let (a, b) = if *s { (e.j, e.i) } else { (e.i, e.j) };
        wtr.write_record([g.label(a), g.label(b), &e.w.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `i,j,w,y,x1,…` with rows in the stored i < j orientation, the
/// orientation in which `y` and `x` are interpreted.
pub fn write_edge_data<W: Write>(g: &Graph, y: &DVector<f64>, x: &DMatrix<f64>, w: W) -> Result<()> {
    if y.len() != g.m() || x.nrows() != g.m() {
        return Err(NetError::Dimension(format!("{} edges, {} outcomes, {} covariate rows", g.m(), y.len(), x.nrows())));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["i".to_string(), "j".to_string(), "w".to_string(), "y".to_string()];
    header.extend((1..=x.ncols()).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    for (k, e) in g.edges().iter().enumerate() {
        let mut rec = vec![g.label(e.i).to_string(), g.label(e.j).to_string(), e.w.to_string(), y[k].to_string()];
        rec.extend((0..x.ncols()).map(|c| x[(k, c)].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `i,j,y,x1,…`; columns after `y` are covariates.
pub fn read_matched<R: Read>(r: R) -> Result<BipartiteData> {
    read_matched_with(r, true)
}

/// Like [`read_matched`]; without `require_outcome` a missing `y` column
/// reads as zeros.
pub fn read_matched_with<R: Read>(r: R, require_outcome: bool) -> Result<BipartiteData> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(NetError::MissingColumn("j".into()));
    }
    let y_col = headers.iter().position(|h| h == "y");
    if require_outcome && y_col.is_none() {
        return Err(NetError::MissingColumn("y".into()));
    }
    let x_cols: Vec<usize> = (2..headers.len()).filter(|&c| Some(c) != y_col).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| NetError::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(NetError::Parse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        rows.push(MatchedRow {
            i: rec[0].to_string(),
            j: rec[1].to_string(),
            y: match y_col {
                Some(c) => parse_num(&rec[c], row, "y")?,
                None => 0.0,
            },
            x: x_cols
                .iter()
                .map(|&c| parse_num(&rec[c], row, &headers[c]))
                .collect::<Result<_>>()?,
        });
    }
    build_bipartite(&rows)
}

pub fn write_matched<W: Write>(bd: &BipartiteData, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["i".to_string(), "j".to_string(), "y".to_string()];
    header.extend((1..=bd.p()).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    for e in 0..bd.m() {
        let mut rec = vec![
            bd.labels1[bd.rows_i[e]].clone(),
            bd.labels2[bd.rows_j[e]].clone(),
            bd.y[e].to_string(),
        ];
        rec.extend((0..bd.p()).map(|k| bd.x[(e, k)].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the projected edges as `j,jprime,w`.
pub fn write_projection<W: Write>(p: &Projection, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["j", "jprime", "w"])?;
    for &(j, jp, v) in &p.edges {
        wtr.write_record([p.labels[j].as_str(), p.labels[jp].as_str(), &v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One line of a fit CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRow {
    pub vertex_id: String,
    pub alpha: f64,
    pub se: f64,
}

pub fn write_fits<W: Write>(rows: &[FitRow], w: W) -> Result<()> {
    write_records(rows, w)
}

/// Two-way fit line: `side` is `mu` for type-1 and `eta` for type-2 vertices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoWayFitRow {
    pub side: &'static str,
    pub vertex_id: String,
    pub effect: f64,
    pub se: f64,
}

pub fn write_two_way_fits<W: Write>(rows: &[TwoWayFitRow], w: W) -> Result<()> {
    write_records(rows, w)
}

/// Writes any serializable records as CSV with a header row.
pub fn write_records<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
