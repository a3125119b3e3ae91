//! CSV ingestion.

use std::io::Read;

use crate::error::{CliError, CliResult};

/// How the input columns are laid out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    /// `t,y`
    Time,
    /// `x1,…,xD,y`, or `t,x1,…,xk,y` with the timestamp as the first input.
    Inputs(usize),
    /// `t,site,y` with `site` a 0-based index into a locations file.
    SpaceTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    /// Input vector: `[t]`, `[x1, …, xD]` or `[t, site]`.
    pub x: Vec<f64>,
    /// `None` marks a predict-only row.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub layout: Layout,
    /// Input column names in file order.
    pub columns: Vec<String>,
    pub records: Vec<StreamRecord>,
}

impl Dataset {
    pub fn input_dim(&self) -> usize {
        match self.layout {
            Layout::Time => 1,
            Layout::Inputs(d) => d,
            Layout::SpaceTime => 2,
        }
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.x.clone()).collect()
    }
}

fn layout_from_header(header: &[String]) -> CliResult<Layout> {
    let bad = |msg: &str| CliError::Input(format!("header {header:?}: {msg}"));
    if header.last().map(String::as_str) != Some("y") {
        return Err(bad("last column must be `y`"));
    }
    let inputs = &header[..header.len() - 1];
    match inputs {
        [t] if t == "t" => Ok(Layout::Time),
        [t, s] if t == "t" && s == "site" => Ok(Layout::SpaceTime),
        [] => Err(bad("no input columns")),
        cols => {
            let xs = if cols[0] == "t" { &cols[1..] } else { cols };
            for (i, c) in xs.iter().enumerate() {
                if *c != format!("x{}", i + 1) {
                    return Err(bad("input columns must be `t`, `t,site`, or `[t,]x1..xD`"));
                }
            }
            Ok(Layout::Inputs(cols.len()))
        }
    }
}

/// Reads a headed CSV stream. Empty `y` cells become predict-only records.
pub fn ingest_csv<R: Read>(reader: R) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let layout = layout_from_header(&header)?;
    let ncols = header.len();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CliError::Data {
            row: row_no,
            message: e.to_string(),
        })?;
        if row.len() != ncols {
            return Err(CliError::Data {
                row: row_no,
                message: format!("expected {ncols} fields, found {}", row.len()),
            });
        }
        let mut x = Vec::with_capacity(ncols - 1);
        for (j, cell) in row.iter().take(ncols - 1).enumerate() {
            let v = parse_cell(cell, row_no, &header[j])?;
            x.push(v);
        }
        if layout == Layout::SpaceTime && (x[1] < 0.0 || x[1].fract() != 0.0) {
            return Err(CliError::Data {
                row: row_no,
                message: format!("site must be a non-negative integer, got {}", x[1]),
            });
        }
        let ycell = &row[ncols - 1];
        let y = if ycell.is_empty() {
            None
        } else {
            Some(parse_cell(ycell, row_no, "y")?)
        };
        records.push(StreamRecord { x, y });
    }
    Ok(Dataset {
        layout,
        columns: header[..ncols - 1].to_vec(),
        records,
    })
}

fn parse_cell(cell: &str, row: usize, column: &str) -> CliResult<f64> {
    let v: f64 = cell.parse().map_err(|_| CliError::Data {
        row,
        message: format!("column `{column}`: cannot parse `{cell}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(CliError::Data {
            row,
            message: format!("column `{column}`: non-finite value `{cell}`"),
        });
    }
    Ok(v)
}

/// Reads a headed CSV of site coordinates, one site per row.
pub fn read_locations<R: Read>(reader: R) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CliError::Input(format!("locations: {e}")))?;
        let coords = row
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|_| {
                    CliError::Input(format!("locations row {}: cannot parse `{c}`", i + 1))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        out.push(coords);
    }
    if out.is_empty() {
        return Err(CliError::Input("locations file has no rows".into()));
    }
    Ok(out)
}
