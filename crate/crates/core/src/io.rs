//! Image and kernel file formats.
//!
//! * PGM `P5`, 8-bit, maxval 255, mapped linearly to `[0, 1]`.
//! * `Pf-txt`: a plain-text header `Pf-txt <height> <width>` followed by
//!   `height * width` whitespace-separated reals, row-major. Values are written
//!   with round-trip precision, so this format is lossless. Lines starting
//!   with `#` are comments.
//! * Kernels: one row of whitespace-separated reals per line. Blank lines and
//!   lines starting with `#` are ignored.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Kernel};

pub const PFM_TXT_MAGIC: &str = "Pf-txt";

pub fn write_pgm<W: Write>(img: &Image, out: W) -> Result<()> {
    write_pgm_with_comment(img, None, out)
}

/// PGM with an optional `#` comment line after the magic.
pub fn write_pgm_with_comment<W: Write>(img: &Image, comment: Option<&str>, mut out: W) -> Result<()> {
    writeln!(out, "P5")?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    write!(out, "{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_pgm<R: Read>(mut input: R) -> Result<Image> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // skip whitespace and comments
        while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        header.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(Error::Parse(format!("expected P5 magic, found {:?}", header[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM {what}: {s:?}")))
    };
    let width = parse(&header[1], "width")?;
    let height = parse(&header[2], "height")?;
    let maxval = parse(&header[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Parse(format!("only maxval 255 is supported, found {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if buf.len() < pos + need {
        return Err(Error::Parse(format!(
            "PGM raster truncated: need {need} bytes, have {}",
            buf.len().saturating_sub(pos)
        )));
    }
    let data = buf[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(height, width, data)
}

pub fn write_pfm_txt<W: Write>(img: &Image, out: W) -> Result<()> {
    write_pfm_txt_with_comment(img, None, out)
}

/// `Pf-txt` with optional `#` comment lines after the header line.
pub fn write_pfm_txt_with_comment<W: Write>(img: &Image, comment: Option<&str>, mut out: W) -> Result<()> {
    writeln!(out, "{PFM_TXT_MAGIC} {} {}", img.height(), img.width())?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    for row in img.data().chunks(img.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_pfm_txt<R: Read>(mut input: R) -> Result<Image> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace);
    match tokens.next() {
        Some(PFM_TXT_MAGIC) => {}
        other => return Err(Error::Parse(format!("expected {PFM_TXT_MAGIC} header, found {other:?}"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {what}")))?
            .parse()
            .map_err(|_| Error::Parse(format!("bad {what}")))
    };
    let height = dim("height")?;
    let width = dim("width")?;
    let data = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad pixel value {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Image::new(height, width, data)
}

pub fn parse_kernel(text: &str) -> Result<Kernel> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("kernel line {}: bad value {t:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "kernel line {}: expected {} values, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty kernel".into()));
    }
    let cols = rows[0].len();
    Kernel::new(rows.len(), cols, rows.into_iter().flatten().collect())
}

pub fn format_kernel(k: &Kernel) -> String {
    k.taps()
        .chunks(k.cols())
        .map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ") + "\n")
        .collect()
}

/// Reads an image, choosing the format from the file's magic bytes.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        read_pgm(bytes.as_slice())
    } else if bytes.starts_with(PFM_TXT_MAGIC.as_bytes()) {
        read_pfm_txt(bytes.as_slice())
    } else {
        Err(Error::Parse(format!("{}: unrecognised image format", path.display())))
    }
}

/// Writes PGM for `.pgm` paths and `Pf-txt` otherwise.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    save_image_with_comment(img, path, None)
}

pub fn save_image_with_comment(img: &Image, path: &Path, comment: Option<&str>) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        write_pgm_with_comment(img, comment, &mut buf)?;
    } else {
        write_pfm_txt_with_comment(img, comment, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_kernel(path: &Path) -> Result<Kernel> {
    parse_kernel(&fs::read_to_string(path)?)
}
