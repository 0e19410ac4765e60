//! In-memory CSV tables written out at the end of a run.

use std::path::Path;

use super::HarnessError;

/// A named CSV table. Values are stored pre-formatted so the bytes are
/// fixed once the run finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_csv_bytes()).map_err(|e| HarnessError::io(&path, e))
    }

    /// Column index by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }
}

pub(crate) fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn fmt_b(v: bool) -> String {
    if v { "1" } else { "0" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_bytes_have_header() {
        let mut t = Table::new("pose", &["t_s", "x_m"]);
        t.push(vec![fmt_f(0.0), fmt_f(0.25)]);
        t.push(vec![fmt_f(0.01), fmt_f(-1e-3)]);
        assert_eq!(String::from_utf8(t.to_csv_bytes()).unwrap(), "t_s,x_m\n0,0.25\n0.01,-0.001\n");
        assert_eq!(t.column("x_m"), Some(1));
        assert_eq!(fmt_b(true), "1");
    }
}
