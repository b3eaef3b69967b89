//! CSV rendering. Real numbers are written with 10 significant digits.

use std::fmt::Write as _;

use crate::urn::{McRow, Pmf, TrajectoryRow};

pub const SIGNIFICANT_DIGITS: i32 = 10;

/// Fixed notation with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_owned();
    }
    let magnitude = x.abs().log10().floor() as i32 + 1;
    let decimals = (SIGNIFICANT_DIGITS - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding up may add a leading digit, as in 9.9999999999 -> 10.00000000.
    let digits = s.bytes().filter(u8::is_ascii_digit).skip_while(|b| *b == b'0').count();
    if digits > SIGNIFICANT_DIGITS as usize && decimals > 0 {
        format!("{x:.*}", decimals - 1)
    } else {
        s
    }
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("round,mean_width,stddev_removal\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.round, fmt_sig(r.mean_width), fmt_sig(r.stddev_removal));
    }
    out
}

/// Rows for the support of the distribution only.
pub fn pmf_csv(pmf: &Pmf) -> String {
    let mut out = String::from("j,probability\n");
    for (j, p) in pmf.support() {
        let _ = writeln!(out, "{j},{}", fmt_sig(p));
    }
    out
}

pub fn rounds_csv(rows: &[(u64, u64, u64)]) -> String {
    let mut out = String::from("d,k,rounds\n");
    for (d, k, n) in rows {
        let _ = writeln!(out, "{d},{k},{n}");
    }
    out
}

pub fn monte_carlo_csv(rows: &[McRow]) -> String {
    let mut out = String::from("round,mean_width,p025,p975\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.round, fmt_sig(r.mean_width), fmt_sig(r.p025), fmt_sig(r.p975));
    }
    out
}
