//! CSV writers. Every file starts with one `#` comment line carrying the
//! parameters of the run and the crate version. Wall times are kept out of
//! CSV files so identical runs write identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::c64;

use crate::benchmarks::SelftestReport;
use crate::coupled::IterationRecord;
use crate::error::Result;

pub const HISTORY_HEADER: &str = "iter,residual,darcy_inner,stokes_inner,drag_err,p_err,u_err";
pub const TABLE_HEADER: &str =
    "h,N,dn_sa_05,dn_sa_075,local_sa_darcy,local_sa_stokes,local_gmres_darcy,local_gmres_stokes,p_err,u_err";
pub const SELFTEST_HEADER: &str = "h,N,error,iterations";

/// Builds the leading comment from key/value pairs.
pub fn comment_line(command: &str, params: &[(&str, String)]) -> String {
    let mut s = format!("sdbie {} command={command}", crate::VERSION);
    for (k, v) in params {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(v);
    }
    s
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_e(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Outer iteration history written and flushed record by record.
pub struct HistoryWriter<W: Write> {
    out: W,
}

impl<W: Write> HistoryWriter<W> {
    pub fn new(mut out: W, comment: &str) -> Result<Self> {
        writeln!(out, "# {comment}")?;
        writeln!(out, "{HISTORY_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &IterationRecord) -> Result<()> {
        writeln!(
            self.out,
            "{},{:.6e},{},{},{},{},{}",
            r.iter,
            r.residual,
            r.darcy_inner,
            r.stokes_inner,
            opt_e(r.drag_err),
            opt_e(r.p_err),
            opt_e(r.u_err)
        )?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// One row of a benchmark table; unset fields are written empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableRow {
    pub h: f64,
    pub n: usize,
    pub dn_sa_05: Option<usize>,
    pub dn_sa_075: Option<usize>,
    pub local_sa_darcy: Option<(usize, usize)>,
    pub local_sa_stokes: Option<(usize, usize)>,
    pub local_gmres_darcy: Option<usize>,
    pub local_gmres_stokes: Option<usize>,
    pub p_err: Option<f64>,
    pub u_err: Option<f64>,
}

fn range(v: Option<(usize, usize)>) -> String {
    v.map(|(a, b)| format!("{a}-{b}")).unwrap_or_default()
}

pub fn write_table<W: Write>(mut w: W, comment: &str, rows: &[TableRow]) -> Result<()> {
    writeln!(w, "# {comment}")?;
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.h,
            r.n,
            opt(r.dn_sa_05),
            opt(r.dn_sa_075),
            range(r.local_sa_darcy),
            range(r.local_sa_stokes),
            opt(r.local_gmres_darcy),
            opt(r.local_gmres_stokes),
            opt_e(r.p_err),
            opt_e(r.u_err)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_selftest<W: Write>(mut w: W, comment: &str, rows: &[SelftestReport]) -> Result<()> {
    writeln!(w, "# {comment}")?;
    writeln!(w, "{SELFTEST_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.6e},{}", r.h, r.nodes, r.error, r.iterations)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum<W: Write>(mut w: W, comment: &str, values: &[c64]) -> Result<()> {
    writeln!(w, "# {comment}")?;
    writeln!(w, "rank,re,im")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{:.12e},{:.12e}", i + 1, v.re, v.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mode_coefficients<W: Write>(mut w: W, comment: &str, values: &[(usize, f64)]) -> Result<()> {
    writeln!(w, "# {comment}")?;
    writeln!(w, "n,A_n")?;
    for (n, a) in values {
        writeln!(w, "{n},{a:.15e}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_rows_leave_missing_errors_empty() {
        let mut h = HistoryWriter::new(Vec::new(), "test").unwrap();
        let rec = IterationRecord { iter: 3, residual: 0.5, darcy_inner: 4, stokes_inner: 6, drag_err: None, p_err: Some(1e-5), u_err: None };
        h.write(&rec).unwrap();
        let s = String::from_utf8(h.into_inner()).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# "));
        assert_eq!(lines[1], HISTORY_HEADER);
        assert_eq!(lines[2], "3,5.000000e-1,4,6,,1.000000e-5,");
    }

    #[test]
    fn table_row_format() {
        let mut buf = Vec::new();
        let row = TableRow { h: 0.0625, n: 4302, dn_sa_05: Some(19), local_sa_darcy: Some((37, 2)), ..Default::default() };
        write_table(&mut buf, "c", &[row]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(2).unwrap(), "0.0625,4302,19,,37-2,,,,,");
    }

    #[test]
    fn comment_contains_version() {
        let c = comment_line("solve", &[("h", "0.0625".into())]);
        assert!(c.contains(crate::VERSION) && c.ends_with("h=0.0625"));
    }
}
