//! Line-oriented metric reports.
//!
//! ```text
//! # surfsplat-report v1
//! perceptual=null
//! kind=view view=0 scale=1 label=Standard width=64 height=64 pixels=4096 psnr=31.2 ssim=0.97 lpips=null flags=perceptual-skipped
//! kind=mean scale=1 label=Standard width=64 height=64 pixels=4096 psnr=31.2 ssim=0.97 lpips=null flags=perceptual-skipped
//! ```
//!
//! Floats are printed with the shortest representation that parses back to
//! the same value. An empty flag list is written as `-`.

use super::{open, write_bytes};
use crate::metrics::{MetricsReport, MetricsRow};
use crate::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

pub const REPORT_HEADER: &str = "# surfsplat-report v1";

fn format_row(out: &mut String, row: &MetricsRow) {
    match row.view {
        Some(v) => write!(out, "kind=view view={v} "),
        None => write!(out, "kind=mean "),
    }
    .unwrap();
    let lpips = row.lpips.map_or("null".to_string(), |v| v.to_string());
    let flags = if row.flags.is_empty() {
        "-".to_string()
    } else {
        row.flags.join(",")
    };
    writeln!(
        out,
        "scale={} label={} width={} height={} pixels={} psnr={} ssim={} lpips={lpips} flags={flags}",
        row.scale,
        row.label(),
        row.width,
        row.height,
        row.pixels,
        row.psnr,
        row.ssim,
    )
    .unwrap();
}

pub fn format_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    match &report.perceptual {
        Some(p) => writeln!(out, "perceptual={}", p.replace('\n', " ")).unwrap(),
        None => out.push_str("perceptual=null\n"),
    }
    for row in report.rows.iter().chain(&report.averages) {
        format_row(&mut out, row);
    }
    out
}

fn parse_row(line: &str, n: usize) -> Result<(bool, MetricsRow)> {
    let bad = |msg: String| Error::MalformedHeader(format!("report line {n}: {msg}"));
    let fields: HashMap<&str, &str> = line
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| bad(format!("`{kv}` is not key=value")))
        })
        .collect::<Result<_>>()?;
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| bad(format!("missing `{k}`")))
    };
    fn num<T: std::str::FromStr>(s: &str, k: &str, n: usize) -> Result<T> {
        s.parse()
            .map_err(|_| Error::MalformedHeader(format!("report line {n}: bad `{k}` value `{s}`")))
    }
    let is_view = match get("kind")? {
        "view" => true,
        "mean" => false,
        k => return Err(bad(format!("unknown row kind `{k}`"))),
    };
    let row = MetricsRow {
        view: if is_view {
            Some(num(get("view")?, "view", n)?)
        } else {
            None
        },
        scale: num(get("scale")?, "scale", n)?,
        width: num(get("width")?, "width", n)?,
        height: num(get("height")?, "height", n)?,
        pixels: num(get("pixels")?, "pixels", n)?,
        psnr: num(get("psnr")?, "psnr", n)?,
        ssim: num(get("ssim")?, "ssim", n)?,
        lpips: match get("lpips")? {
            "null" => None,
            v => Some(num(v, "lpips", n)?),
        },
        flags: match get("flags")? {
            "-" => Vec::new(),
            f => f.split(',').map(str::to_string).collect(),
        },
    };
    if get("label")? != row.label() {
        return Err(bad(format!("label does not match scale {}", row.scale)));
    }
    Ok((is_view, row))
}

pub fn parse_report(text: &str) -> Result<MetricsReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, REPORT_HEADER)) => {}
        Some((_, l)) if l.starts_with("# surfsplat-report") => {
            return Err(Error::Unsupported(format!("report version `{l}`")))
        }
        _ => {
            return Err(Error::BadMagic(format!(
                "reports start with `{REPORT_HEADER}`"
            )))
        }
    }
    let mut report = MetricsReport::default();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(p) = line.strip_prefix("perceptual=") {
            report.perceptual = (p != "null").then(|| p.to_string());
            continue;
        }
        let (is_view, row) = parse_row(line, n)?;
        if is_view {
            report.rows.push(row);
        } else {
            report.averages.push(row);
        }
    }
    Ok(report)
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    write_bytes(path, format_report(report).as_bytes(), true)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::file(path, e))?;
    parse_report(&text)
}
