//! CSV input and output.
//!
//! Input files have a header. A leading `y` column holds the response; trailing columns
//! named `v1`, `v2`, … hold ground-truth statistics; everything in between is a feature.
//! The path `-` reads standard input.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{OksirError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub has_y: bool,
    pub features: usize,
    pub truths: usize,
}

impl Layout {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let names: Vec<String> = header.iter().map(|s| s.trim().to_ascii_lowercase()).collect();
        if names.is_empty() || names.iter().all(|n| n.is_empty()) {
            return Err(OksirError::Data { line: 1, message: "missing header".into() });
        }
        let has_y = names[0] == "y";
        let is_truth = |n: &str| n.len() > 1 && n.starts_with('v') && n[1..].chars().all(|c| c.is_ascii_digit());
        let start = usize::from(has_y);
        let truths = names[start..].iter().rev().take_while(|n| is_truth(n)).count();
        let features = names.len() - start - truths;
        if features == 0 {
            return Err(OksirError::Data { line: 1, message: "no feature columns".into() });
        }
        Ok(Layout { has_y, features, truths })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// 1-based line number in the input.
    pub line: u64,
    pub y: Option<f64>,
    pub x: Vec<f64>,
    pub truths: Vec<f64>,
}

pub fn open_input(path: &str) -> Result<Box<dyn Read>> {
    if path == "-" {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let f = File::open(path).map_err(|e| OksirError::Io(io::Error::new(e.kind(), format!("{path}: {e}"))))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn create_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        let f = File::create(path).map_err(|e| OksirError::Io(io::Error::new(e.kind(), format!("{path}: {e}"))))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

/// Row-at-a-time reader. In lenient mode malformed rows are reported to `warn` and
/// skipped; otherwise the first one is an error carrying its line number.
pub struct CsvStream<R: Read> {
    reader: csv::Reader<R>,
    layout: Layout,
    lenient: bool,
    skipped: u64,
    record: csv::StringRecord,
}

impl<R: Read> CsvStream<R> {
    pub fn new(input: R, lenient: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| OksirError::Data { line: 1, message: e.to_string() })?
            .clone();
        let layout = Layout::from_header(&header)?;
        Ok(CsvStream {
            reader,
            layout,
            lenient,
            skipped: 0,
            record: csv::StringRecord::new(),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn parse(&self, line: u64) -> Result<Row> {
        let rec = &self.record;
        let want = usize::from(self.layout.has_y) + self.layout.features + self.layout.truths;
        if rec.len() != want {
            return Err(OksirError::Data {
                line,
                message: format!("expected {want} fields, found {}", rec.len()),
            });
        }
        let mut values = Vec::with_capacity(want);
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| OksirError::Data {
                line,
                message: format!("field {} (`{field}`) is not a number", i + 1),
            })?;
            if !v.is_finite() {
                return Err(OksirError::Data {
                    line,
                    message: format!("field {} is not finite", i + 1),
                });
            }
            values.push(v);
        }
        let start = usize::from(self.layout.has_y);
        let end = start + self.layout.features;
        Ok(Row {
            line,
            y: self.layout.has_y.then(|| values[0]),
            x: values[start..end].to_vec(),
            truths: values[end..].to_vec(),
        })
    }

    /// Next well-formed row, or `None` at end of input.
    pub fn next_row(&mut self, warn: &mut dyn FnMut(&OksirError)) -> Option<Result<Row>> {
        loop {
            match self.reader.read_record(&mut self.record) {
                Ok(false) => return None,
                Ok(true) => {
                    let line = self.record.position().map_or(0, |p| p.line());
                    if self.record.iter().all(|f| f.is_empty()) {
                        continue;
                    }
                    match self.parse(line) {
                        Ok(row) => return Some(Ok(row)),
                        Err(e) if self.lenient => {
                            self.skipped += 1;
                            warn(&e);
                        }
                        Err(e) => return Some(Err(e)),
                    }
                }
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    let err = OksirError::Data { line, message: e.to_string() };
                    if !self.lenient || matches!(e.kind(), csv::ErrorKind::Io(_)) {
                        return Some(Err(err));
                    }
                    self.skipped += 1;
                    warn(&err);
                }
            }
        }
    }
}

/// A whole CSV file in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub y: Option<Array1<f64>>,
    pub x: Array2<f64>,
    pub truths: Option<Array2<f64>>,
}

pub fn read_table<R: Read>(input: R, lenient: bool, warn: &mut dyn FnMut(&OksirError)) -> Result<Table> {
    let mut stream = CsvStream::new(input, lenient)?;
    let layout = stream.layout().clone();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    let mut n = 0;
    while let Some(row) = stream.next_row(warn) {
        let row = row?;
        if let Some(y) = row.y {
            ys.push(y);
        }
        xs.extend(row.x);
        vs.extend(row.truths);
        n += 1;
    }
    let x = Array2::from_shape_vec((n, layout.features), xs).expect("row widths checked");
    Ok(Table {
        y: layout.has_y.then(|| Array1::from(ys)),
        x,
        truths: (layout.truths > 0).then(|| Array2::from_shape_vec((n, layout.truths), vs).expect("row widths checked")),
    })
}

pub fn read_table_path(path: &str, lenient: bool, warn: &mut dyn FnMut(&OksirError)) -> Result<Table> {
    read_table(open_input(path)?, lenient, warn)
}

/// A headed CSV of numbers, with no column roles.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl NamedMatrix {
    /// Index of the column called `name` (case-insensitive).
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }
}

pub fn read_numeric<R: Read>(input: R) -> Result<NamedMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| OksirError::Data { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(OksirError::Data { line: 1, message: "missing header".into() });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| OksirError::Data {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| OksirError::Data {
                line,
                message: format!("field {} (`{field}`) is not a finite number", i + 1),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, names.len()), values).expect("csv enforces equal widths");
    Ok(NamedMatrix { names, values })
}

/// Writes a header and the rows of `m`, reals in shortest round-trip form.
pub fn write_matrix(out: &mut dyn Write, header: &[String], m: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_io)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub(crate) fn csv_io(e: csv::Error) -> OksirError {
    OksirError::Io(io::Error::other(e.to_string()))
}

pub fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_warn() -> impl FnMut(&OksirError) {
        |_e: &OksirError| {}
    }

    #[test]
    fn layout_detection() {
        let h = csv::StringRecord::from(vec!["y", "x1", "x2", "v1", "v2"]);
        assert_eq!(Layout::from_header(&h).unwrap(), Layout { has_y: true, features: 2, truths: 2 });
        let h = csv::StringRecord::from(vec!["x1", "x2"]);
        assert_eq!(Layout::from_header(&h).unwrap(), Layout { has_y: false, features: 2, truths: 0 });
        let h = csv::StringRecord::from(vec!["y", "v1"]);
        assert!(Layout::from_header(&h).is_err());
    }

    #[test]
    fn strict_mode_reports_line() {
        let text = "y,x1\n1,2\n3,oops\n";
        let mut s = CsvStream::new(text.as_bytes(), false).unwrap();
        let mut warn = no_warn();
        assert!(s.next_row(&mut warn).unwrap().is_ok());
        match s.next_row(&mut warn).unwrap() {
            Err(OksirError::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lenient_mode_skips() {
        let text = "y,x1\n1,2\n3,oops\n4\n5,6\n";
        let mut warnings = 0;
        let mut warn = |_: &OksirError| warnings += 1;
        let t = read_table(text.as_bytes(), true, &mut warn).unwrap();
        assert_eq!(t.x.column(0).to_vec(), vec![2.0, 6.0]);
        assert_eq!(warnings, 2);
    }

    #[test]
    fn numeric_matrix() {
        let m = read_numeric("v1,V2\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m.values, ndarray::array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(m.column_index("v2"), Some(1));
        assert!(matches!(read_numeric("a\n1\nx\n".as_bytes()), Err(OksirError::Data { line: 3, .. })));
    }

    #[test]
    fn table_with_truths() {
        let text = "y,x1,x2,v1\n1,2,3,4\n5,6,7,8\n";
        let t = read_table(text.as_bytes(), false, &mut no_warn()).unwrap();
        assert_eq!(t.y.unwrap().to_vec(), vec![1.0, 5.0]);
        assert_eq!(t.x.dim(), (2, 2));
        assert_eq!(t.truths.unwrap().column(0).to_vec(), vec![4.0, 8.0]);
    }
}
