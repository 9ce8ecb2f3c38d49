//! Text format for memory-polynomial coefficients.
//!
//! ```text
//! palink-mp 1
//! memory 2
//! order 4
//! limit 1.525
//! # tap power re im
//! -1 0 2.71e-2 1.53e-2
//! ...
//! ```
//!
//! One line per coefficient `(tap, power, Re, Im)` multiplying
//! `x[n - tap] |x[n - tap]|^(2 power)`, with taps from `-(memory - 1)` to
//! `memory - 1` and powers from 0 to `order - 1`. Missing coefficients are
//! zero. `limit` is optional (`none` or absent means no limiter). A
//! predistorter bank has a `chains N` line after the header and one
//! `chain d` section per chain, each with its own `memory`, `order`,
//! `limit` and coefficient lines. `#` starts a comment.

use std::{fmt::Write as _, path::Path};

use palink_core::{
    linearizer::DpdBank,
    math::C64,
    pa_model::{MemoryPolynomial, PaModel},
};

use crate::{Error, Result};

const MAGIC: &str = "palink-mp";
pub const FORMAT_VERSION: u32 = 1;

fn write_poly(out: &mut String, poly: &MemoryPolynomial, limit: Option<f64>) {
    let _ = writeln!(out, "memory {}", poly.memory());
    let _ = writeln!(out, "order {}", poly.order());
    match limit {
        Some(l) => {
            let _ = writeln!(out, "limit {l:e}");
        }
        None => out.push_str("limit none\n"),
    }
    out.push_str("# tap power re im\n");
    for tap in poly.taps() {
        for u in 0..poly.order() {
            let c = poly.coeff(tap, u);
            let _ = writeln!(out, "{tap} {u} {:e} {:e}", c.re, c.im);
        }
    }
}

pub fn format_pa(model: &PaModel) -> String {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
    write_poly(&mut out, &model.poly, model.input_limit);
    out
}

pub fn format_dpd(bank: &DpdBank) -> String {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\nchains {}\n", bank.chains.len());
    for (d, (poly, limit)) in bank.chains.iter().zip(&bank.output_limit).enumerate() {
        let _ = writeln!(out, "chain {d}");
        write_poly(&mut out, poly, *limit);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>()))
                .filter(|(_, t)| !t.is_empty()),
        );
        Lines { inner: it.peekable() }
    }

    fn keyword(&mut self, key: &str) -> std::result::Result<&'a str, String> {
        match self.inner.next() {
            Some((_, t)) if t.len() == 2 && t[0] == key => Ok(t[1]),
            Some((n, _)) => Err(format!("line {n}: expected `{key} <value>`")),
            None => Err(format!("unexpected end of file, expected `{key}`")),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> std::result::Result<T, String> {
        let v = self.keyword(key)?;
        v.parse().map_err(|_| format!("`{key}`: cannot parse `{v}`"))
    }

    fn header(&mut self) -> std::result::Result<(), String> {
        let v = self.keyword(MAGIC)?;
        match v.parse::<u32>() {
            Ok(FORMAT_VERSION) => Ok(()),
            _ => Err(format!("unsupported format version `{v}`")),
        }
    }

    fn poly(&mut self) -> std::result::Result<(MemoryPolynomial, Option<f64>), String> {
        let memory: usize = self.number("memory")?;
        let order: usize = self.number("order")?;
        if memory == 0 || order == 0 {
            return Err("memory and order must be at least 1".into());
        }
        let has_limit = matches!(self.inner.peek(), Some((_, t)) if t[0] == "limit");
        let limit = match if has_limit { self.keyword("limit")? } else { "none" } {
            "none" => None,
            v => Some(v.parse::<f64>().map_err(|_| format!("`limit`: cannot parse `{v}`"))?),
        };
        let mut poly = MemoryPolynomial::identity(memory, order);
        poly.coeffs_mut().iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        let m = memory as isize - 1;
        while let Some((n, t)) = self.inner.peek() {
            if t[0] == "chain" {
                break;
            }
            let n = *n;
            let row = || format!("line {n}: expected `tap power re im`");
            if t.len() != 4 {
                return Err(row());
            }
            let tap: isize = t[0].parse().map_err(|_| row())?;
            let u: usize = t[1].parse().map_err(|_| row())?;
            let re: f64 = t[2].parse().map_err(|_| row())?;
            let im: f64 = t[3].parse().map_err(|_| row())?;
            if tap.abs() > m || u >= order {
                return Err(format!("line {n}: coefficient ({tap}, {u}) outside memory {memory}, order {order}"));
            }
            poly.set_coeff(tap, u, C64::new(re, im));
            self.inner.next();
        }
        Ok((poly, limit))
    }

    fn finish(&mut self) -> std::result::Result<(), String> {
        match self.inner.next() {
            Some((n, _)) => Err(format!("line {n}: unexpected content")),
            None => Ok(()),
        }
    }
}

pub fn parse_pa(text: &str) -> std::result::Result<PaModel, String> {
    let mut lines = Lines::new(text);
    lines.header()?;
    let (poly, limit) = lines.poly()?;
    lines.finish()?;
    PaModel::new(poly, limit).map_err(|e| e.to_string())
}

pub fn parse_dpd(text: &str) -> std::result::Result<DpdBank, String> {
    let mut lines = Lines::new(text);
    lines.header()?;
    let n: usize = lines.number("chains")?;
    let mut bank = DpdBank { chains: Vec::with_capacity(n), output_limit: Vec::with_capacity(n) };
    for d in 0..n {
        let got: usize = lines.number("chain")?;
        if got != d {
            return Err(format!("expected chain {d}, found chain {got}"));
        }
        let (poly, limit) = lines.poly()?;
        bank.chains.push(poly);
        bank.output_limit.push(limit);
    }
    lines.finish()?;
    Ok(bank)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_pa(path: &Path) -> Result<PaModel> {
    parse_pa(&read(path)?).map_err(|m| Error::parse(path, m))
}

pub fn read_dpd(path: &Path) -> Result<DpdBank> {
    parse_dpd(&read(path)?).map_err(|m| Error::parse(path, m))
}

pub fn write_pa(model: &PaModel, path: &Path) -> Result<()> {
    std::fs::write(path, format_pa(model)).map_err(|e| Error::io(path, e))
}

pub fn write_dpd(bank: &DpdBank, path: &Path) -> Result<()> {
    std::fs::write(path, format_dpd(bank)).map_err(|e| Error::io(path, e))
}
