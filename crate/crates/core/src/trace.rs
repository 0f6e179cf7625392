//! Per-iteration diagnostics and their CSV form.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// Header of the trace CSV.
pub const TRACE_HEADER: &str = "t,objective,s_t,gamma_t,rank,inner_iters,elapsed_s";

/// One outer iteration. Row `t` describes the step from `X_{t−1}` to `X_t`:
/// `s` and `gamma` are measured on the (sub)gradient at `X_{t−1}`, `objective`
/// is `f(X_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    /// Leading singular value of the (sub)gradient.
    pub s: f64,
    /// `s / ‖∇f‖_F`
    pub gamma: f64,
    /// Number of rank-one terms in `X_t`.
    pub rank: usize,
    /// Quasi-Newton iterations (smooth solver) or deflations `k_t` (nonsmooth).
    pub inner_iters: usize,
    pub elapsed_s: f64,
    /// `‖∇f(X_{t−1})‖²_F`
    pub grad_norm_sq: f64,
    /// `‖g_t − h_t‖²_F` (nonsmooth solver only).
    pub residual_sq: Option<f64>,
    /// The ν-test was not met within the deflation cap.
    pub truncated: bool,
    /// The coefficient refinement was rejected and the warm start kept.
    pub refine_fallback: bool,
}

impl TraceRecord {
    /// Row for `X_0`.
    pub fn initial(objective: f64) -> Self {
        TraceRecord {
            iteration: 0,
            objective,
            s: 0.0,
            gamma: 0.0,
            rank: 0,
            inner_iters: 0,
            elapsed_s: 0.0,
            grad_norm_sq: 0.0,
            residual_sq: None,
            truncated: false,
            refine_fallback: false,
        }
    }

    /// CSV row. Floats are written in shortest round-trip form, so the file
    /// reproduces the in-memory values exactly.
    pub fn csv_row(&self, with_time: bool) -> String {
        let elapsed = if with_time { self.elapsed_s } else { 0.0 };
        format!(
            "{},{:?},{:?},{:?},{},{},{:.6}",
            self.iteration,
            self.objective,
            self.s,
            self.gamma,
            self.rank,
            self.inner_iters,
            elapsed
        )
    }
}

/// Streams trace rows to a writer, flushing after each one.
pub struct TraceWriter<W: Write> {
    out: W,
    with_time: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, with_time: bool) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        out.flush()?;
        Ok(TraceWriter { out, with_time })
    }

    pub fn write(&mut self, rec: &TraceRecord) -> io::Result<()> {
        writeln!(self.out, "{}", rec.csv_row(self.with_time))?;
        self.out.flush()
    }
}

/// A parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub s: f64,
    pub gamma: f64,
    pub rank: usize,
    pub inner_iters: usize,
    pub elapsed_s: f64,
}

pub fn read_trace<R: BufRead>(input: R, name: &str) -> Result<Vec<TraceRow>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: name.into(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if k == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(parse_err(lineno, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(
                lineno,
                format!("expected 7 fields, found {}", f.len()),
            ));
        }
        let num = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("field {}: {e}", i + 1)))
        };
        let int = |i: usize| {
            f[i].parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("field {}: {e}", i + 1)))
        };
        rows.push(TraceRow {
            iteration: int(0)?,
            objective: num(1)?,
            s: num(2)?,
            gamma: num(3)?,
            rank: int(4)?,
            inner_iters: int(5)?,
            elapsed_s: num(6)?,
        });
    }
    Ok(rows)
}

/// Wall-clock seconds since construction. Always 0 on `wasm32`, where
/// `std::time::Instant` is unavailable.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}
