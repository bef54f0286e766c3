//! File formats: radiance cubes, pixel masks, label maps, and CSV tables.
//!
//! Cubes are stored as a raw little-endian `float32` band-sequential payload
//! next to a plain-text header (`<data file>.hdr`) listing the grid size and
//! wavelengths, the layout understood by common remote-sensing tools. Masks
//! are binary PGM (`P5`), label maps 16-bit PGM, everything else CSV.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cube::{validate_wavelengths, HsiCube, PixelMask};
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::real::Real;
use crate::segment::SegmentMap;

/// Header file that describes a given cube payload: the payload path with
/// `.hdr` appended (`plume.img` -> `plume.img.hdr`).
pub fn header_path(data_path: &Path) -> PathBuf {
    let mut os = data_path.as_os_str().to_owned();
    os.push(".hdr");
    PathBuf::from(os)
}

// ---------------------------------------------------------------------------
// Radiance cubes
// ---------------------------------------------------------------------------

/// Writes `cube` as a raw little-endian `float32` band-sequential payload at
/// `path` plus a text header at [`header_path`]. Non-finite values and values
/// outside the `float32` range are rejected before anything is written.
pub fn save_cube<R: Real>(cube: &HsiCube<R>, path: &Path) -> Result<()> {
    cube.check_finite()?;
    let mut payload = Vec::with_capacity(cube.data().len() * 4);
    for v in cube.data() {
        let narrowed = v.as_f64() as f32;
        if !narrowed.is_finite() {
            return Err(Error::NonFinite(format!(
                "cube value {v} does not fit in a float32 payload"
            )));
        }
        payload.extend_from_slice(&narrowed.to_le_bytes());
    }

    let mut header = String::new();
    header.push_str("ENVI\n");
    header.push_str("description = {gas plume background estimation cube}\n");
    header.push_str(&format!("samples = {}\n", cube.cols()));
    header.push_str(&format!("lines = {}\n", cube.rows()));
    header.push_str(&format!("bands = {}\n", cube.channels()));
    header.push_str("header offset = 0\n");
    header.push_str("file type = ENVI Standard\n");
    header.push_str("data type = 4\n");
    header.push_str("interleave = bsq\n");
    header.push_str("byte order = 0\n");
    header.push_str("wavelength units = Micrometers\n");
    let waves: Vec<String> = cube.wavelengths().iter().map(|w| format!("{w}")).collect();
    header.push_str(&format!("wavelength = {{\n {}\n}}\n", waves.join(", ")));

    fs::write(path, &payload).map_err(|e| Error::io(path, e))?;
    let hdr = header_path(path);
    fs::write(&hdr, header.as_bytes()).map_err(|e| Error::io(&hdr, e))?;
    Ok(())
}

/// Loads a cube written by [`save_cube`] (or any tool emitting the same
/// layout: `float32`, band-sequential, little-endian, micrometer wavelengths).
pub fn load_cube<R: Real>(path: &Path) -> Result<HsiCube<R>> {
    let hdr_path = header_path(path);
    let text = fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let fields = parse_header_fields(&text, &hdr_path)?;
    let get = |key: &str| -> Result<&str> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(&hdr_path, format!("missing header field '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::format(&hdr_path, format!("field '{key}' is not an integer")))
    };

    let cols = parse_usize("samples")?;
    let rows = parse_usize("lines")?;
    let bands = parse_usize("bands")?;
    let offset = match fields.iter().find(|(k, _)| k == "header offset") {
        Some((_, v)) => v.trim().parse::<usize>().map_err(|_| {
            Error::format(&hdr_path, "field 'header offset' is not an integer")
        })?,
        None => 0,
    };
    let data_type = parse_usize("data type")?;
    if data_type != 4 {
        return Err(Error::format(
            &hdr_path,
            format!("unsupported data type {data_type} (only 4 = float32 is supported)"),
        ));
    }
    let interleave = get("interleave")?.trim().to_ascii_lowercase();
    if interleave != "bsq" {
        return Err(Error::format(
            &hdr_path,
            format!("unsupported interleave '{interleave}' (only bsq is supported)"),
        ));
    }
    let byte_order = parse_usize("byte order")?;
    if byte_order != 0 {
        return Err(Error::format(
            &hdr_path,
            format!("unsupported byte order {byte_order} (only 0 = little-endian)"),
        ));
    }

    let wave_text = get("wavelength")?;
    let mut wavelengths = Vec::with_capacity(bands);
    for tok in wave_text.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let w: f64 = tok
            .parse()
            .map_err(|_| Error::format(&hdr_path, format!("bad wavelength entry '{tok}'")))?;
        wavelengths.push(R::of(w));
    }
    if wavelengths.len() != bands {
        return Err(Error::format(
            &hdr_path,
            format!("{} wavelengths listed for {bands} bands", wavelengths.len()),
        ));
    }
    validate_wavelengths(&wavelengths)?;

    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = offset + rows * cols * bands * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes but {rows}x{cols}x{bands} float32 needs {expected}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(rows * cols * bands);
    for chunk in bytes[offset..].chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "payload of {} contains the non-finite value {v}",
                path.display()
            )));
        }
        data.push(R::of(v as f64));
    }
    HsiCube::new(rows, cols, wavelengths, data)
}

/// Splits header text into lowercase `key = value` pairs, folding `{ ... }`
/// blocks (which may span lines) into a single value.
fn parse_header_fields(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.trim() == "ENVI" => {}
        _ => return Err(Error::format(path, "header must start with an 'ENVI' line")),
    }
    let mut fields = Vec::new();
    let mut pending: Option<(String, String)> = None;
    for line in lines {
        if let Some((key, mut value)) = pending.take() {
            if let Some(end) = line.find('}') {
                value.push(' ');
                value.push_str(&line[..end]);
                fields.push((key, value));
            } else {
                value.push(' ');
                value.push_str(line);
                pending = Some((key, value));
            }
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::format(path, format!("header line without '=': '{line}'")));
        };
        let key = line[..eq].trim().to_ascii_lowercase();
        let raw = line[eq + 1..].trim();
        if let Some(brace) = raw.strip_prefix('{') {
            if let Some(end) = brace.find('}') {
                fields.push((key, brace[..end].to_string()));
            } else {
                pending = Some((key, brace.to_string()));
            }
        } else {
            fields.push((key, raw.to_string()));
        }
    }
    if pending.is_some() {
        return Err(Error::format(path, "unterminated '{' block in header"));
    }
    Ok(fields)
}

// ---------------------------------------------------------------------------
// PGM masks and label maps
// ---------------------------------------------------------------------------

/// Writes a mask as binary PGM (`P5`): 255 for set pixels, 0 otherwise.
pub fn save_mask_pgm(mask: &PixelMask, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(mask.flags().len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", mask.cols(), mask.rows()).as_bytes());
    out.extend(mask.flags().iter().map(|f| if *f { 255u8 } else { 0u8 }));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM mask; any nonzero sample counts as set.
pub fn load_mask_pgm(path: &Path) -> Result<PixelMask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (cols, rows, maxval, data_start) = parse_pgm_header(&bytes, path)?;
    let n = rows * cols;
    let flags = if maxval < 256 {
        let data = bytes
            .get(data_start..data_start + n)
            .ok_or_else(|| Error::format(path, "PGM payload is shorter than the header claims"))?;
        data.iter().map(|b| *b != 0).collect()
    } else {
        let data = bytes
            .get(data_start..data_start + 2 * n)
            .ok_or_else(|| Error::format(path, "PGM payload is shorter than the header claims"))?;
        data.chunks_exact(2).map(|c| c[0] != 0 || c[1] != 0).collect()
    };
    PixelMask::from_flags(rows, cols, flags)
}

/// Writes a segment label map as 16-bit binary PGM (big-endian samples, as
/// the format requires). Fails if any label exceeds 65535.
pub fn save_labels_pgm<R: Real>(map: &SegmentMap<R>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(map.labels().len() * 2 + 32);
    out.extend_from_slice(format!("P5\n{} {}\n65535\n", map.cols(), map.rows()).as_bytes());
    for label in map.labels() {
        if *label > 65535 {
            return Err(Error::InvalidParam(format!(
                "label {label} does not fit in a 16-bit PGM"
            )));
        }
        out.extend_from_slice(&(*label as u16).to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes a segment label map as `row,col,label` CSV in row-major order.
pub fn save_labels_csv<R: Real>(map: &SegmentMap<R>, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(map.labels().len() * 8 + 16);
    text.push_str("row,col,label\n");
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            text.push_str(&format!("{r},{c},{}\n", map.label_at(r, c)));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_pgm_header(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, usize)> {
    // Tokenizer over the ASCII header: magic, width, height, maxval, then a
    // single whitespace byte before the binary payload. '#' starts a comment.
    let mut pos = 0usize;
    let mut token = |expect_token: &str| -> Result<String> {
        while pos < bytes.len() {
            match bytes[pos] {
                b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, format!("PGM header ended before {expect_token}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token("the magic number")?;
    if magic != "P5" {
        return Err(Error::format(path, format!("expected a P5 PGM, found magic '{magic}'")));
    }
    let cols: usize = token("the width")?
        .parse()
        .map_err(|_| Error::format(path, "PGM width is not an integer"))?;
    let rows: usize = token("the height")?
        .parse()
        .map_err(|_| Error::format(path, "PGM height is not an integer"))?;
    let maxval: usize = token("the maximum value")?
        .parse()
        .map_err(|_| Error::format(path, "PGM maxval is not an integer"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("PGM maxval {maxval} is out of range")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(path, "PGM header must end with a whitespace byte"));
    }
    Ok((cols, rows, maxval, pos + 1))
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Writes a per-channel table as `wavelength_um,value` CSV.
pub fn save_spectrum_csv<R: Real>(wavelengths: &[R], values: &[R], path: &Path) -> Result<()> {
    if wavelengths.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} wavelengths vs {} values",
            wavelengths.len(),
            values.len()
        )));
    }
    let mut text = String::from("wavelength_um,value\n");
    for (w, v) in wavelengths.iter().zip(values) {
        text.push_str(&format!("{w},{v}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a `wavelength_um,value` CSV back into (wavelengths, values).
pub fn load_spectrum_csv<R: Real>(path: &Path) -> Result<(Vec<R>, Vec<R>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "wavelength_um,value" => {}
        other => {
            return Err(Error::format(
                path,
                format!("expected header 'wavelength_um,value', found {other:?}"),
            ))
        }
    }
    let mut wavelengths = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let w = parse_float(parts.next(), path, lineno + 2)?;
        let v = parse_float(parts.next(), path, lineno + 2)?;
        if parts.next().is_some() {
            return Err(Error::format(path, format!("line {}: too many columns", lineno + 2)));
        }
        wavelengths.push(R::of(w));
        values.push(R::of(v));
    }
    Ok((wavelengths, values))
}

/// Writes a square matrix as plain CSV, one row per line.
pub fn save_matrix_csv<R: Real>(matrix: &SquareMatrix<R>, path: &Path) -> Result<()> {
    let n = matrix.size();
    let mut text = String::new();
    for i in 0..n {
        let row: Vec<String> = matrix.row(i).iter().map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a square matrix written by [`save_matrix_csv`].
pub fn load_matrix_csv<R: Real>(path: &Path) -> Result<SquareMatrix<R>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<R>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            row.push(R::of(parse_float(Some(tok), path, lineno + 1)?));
        }
        rows.push(row);
    }
    let n = rows.len();
    let mut flat = Vec::with_capacity(n * n);
    for (lineno, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(Error::format(
                path,
                format!("line {}: {} columns in a {n}-row matrix", lineno + 1, row.len()),
            ));
        }
        flat.extend(row);
    }
    SquareMatrix::from_flat(n, flat)
}

/// Writes one value per pixel as `row,col,<name>` CSV in row-major order.
pub fn save_pixel_values_csv<R: Real>(
    rows: usize,
    cols: usize,
    values: &[R],
    value_name: &str,
    path: &Path,
) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "pixel value table needs {} entries, got {}",
            rows * cols,
            values.len()
        )));
    }
    let mut text = format!("row,col,{value_name}\n");
    for r in 0..rows {
        for c in 0..cols {
            text.push_str(&format!("{r},{c},{}\n", values[r * cols + c]));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a per-pixel CSV written by [`save_pixel_values_csv`]. The grid size
/// is inferred from the indices; every pixel must appear exactly once.
pub fn load_pixel_values_csv<R: Real>(path: &Path) -> Result<(usize, usize, Vec<R>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.starts_with("row,col,") => {}
        other => {
            return Err(Error::format(
                path,
                format!("expected a 'row,col,<name>' header, found {other:?}"),
            ))
        }
    }
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_r = 0usize;
    let mut max_c = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let r: usize = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::format(path, format!("line {}: bad row index", lineno + 2)))?;
        let c: usize = parts
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::format(path, format!("line {}: bad col index", lineno + 2)))?;
        let v = parse_float(parts.next(), path, lineno + 2)?;
        max_r = max_r.max(r);
        max_c = max_c.max(c);
        triples.push((r, c, v));
    }
    if triples.is_empty() {
        return Err(Error::format(path, "pixel value table has no rows"));
    }
    let (rows, cols) = (max_r + 1, max_c + 1);
    let mut values: Vec<Option<R>> = vec![None; rows * cols];
    for (r, c, v) in triples {
        let slot = &mut values[r * cols + c];
        if slot.is_some() {
            return Err(Error::format(path, format!("pixel ({r}, {c}) listed twice")));
        }
        *slot = Some(R::of(v));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Some(v) => out.push(v),
            None => {
                return Err(Error::format(
                    path,
                    format!("pixel ({}, {}) is missing", i / cols, i % cols),
                ))
            }
        }
    }
    Ok((rows, cols, out))
}

fn parse_float(tok: Option<&str>, path: &Path, lineno: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::format(path, format!("line {lineno}: missing column")))?;
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::format(path, format!("line {lineno}: '{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "{} line {lineno}: value {v}",
            path.display()
        )));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn grid(c: usize) -> Vec<f64> {
        (0..c).map(|k| 8.0 + 0.1 * k as f64).collect()
    }

    #[test]
    fn cube_round_trips_bitwise_for_float32_values() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cube.img");
        let mut cube = HsiCube::zeros(3, 4, grid(5)).unwrap();
        for (i, v) in cube.data_mut().iter_mut().enumerate() {
            // Values that are exactly representable in f32.
            *v = ((i as f32).sin() * 0.5 + 1.25) as f64;
        }
        save_cube(&cube, &path).unwrap();
        let back: HsiCube = load_cube(&path).unwrap();
        assert_eq!(back.rows(), 3);
        assert_eq!(back.cols(), 4);
        assert_eq!(back.channels(), 5);
        assert_eq!(back.data(), cube.data(), "payload must round trip bit-exactly");
        for (w0, w1) in cube.wavelengths().iter().zip(back.wavelengths()) {
            assert_eq!(w0, w1, "wavelengths must round trip exactly");
        }
    }

    #[test]
    fn truncated_payload_is_a_size_mismatch_error() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cube.img");
        let cube = HsiCube::zeros(2, 2, grid(2)).unwrap();
        save_cube(&cube, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        let err = load_cube::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("payload"), "got: {err}");
    }

    #[test]
    fn nan_data_is_rejected_before_writing() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cube.img");
        let mut cube = HsiCube::zeros(2, 2, grid(2)).unwrap();
        cube.set_value(0, 0, 0, f64::NAN);
        assert!(save_cube(&cube, &path).is_err());
        assert!(!path.exists(), "no partial file may be left behind");
    }

    #[test]
    fn non_increasing_wavelengths_in_header_are_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cube.img");
        let cube = HsiCube::zeros(2, 2, grid(2)).unwrap();
        save_cube(&cube, &path).unwrap();
        let hdr = header_path(&path);
        let text = fs::read_to_string(&hdr).unwrap().replace("8, 8.1", "8, 7.9");
        fs::write(&hdr, text).unwrap();
        assert!(load_cube::<f64>(&path).is_err());
    }

    #[test]
    fn missing_header_is_an_io_error_naming_the_header() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cube.img");
        fs::write(&path, b"payload-without-header").unwrap();
        let err = load_cube::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("cube.img.hdr"), "got: {err}");
    }

    #[test]
    fn mask_round_trips_and_uses_255_for_set_pixels() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("mask.pgm");
        let mut mask = PixelMask::new(3, 2);
        mask.set(0, 1, true);
        mask.set(2, 0, true);
        save_mask_pgm(&mask, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 3\n255\n"));
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 255, 0, 0, 255, 0]);
        let back = load_mask_pgm(&path).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn pgm_comments_and_odd_whitespace_parse() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("mask.pgm");
        fs::write(&path, b"P5 # magic\n# a comment line\n 2\t2 \n255\n\x00\xff\x00\xff").unwrap();
        let mask = load_mask_pgm(&path).unwrap();
        assert_eq!(mask.count(), 2);
        assert!(mask.get(0, 1) && mask.get(1, 1));
    }

    #[test]
    fn spectrum_csv_round_trips_exactly() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("spectrum.csv");
        let waves: Vec<f64> = grid(4);
        let values = vec![0.1, -2.5e-3, 7.25, 1.0 / 3.0];
        save_spectrum_csv(&waves, &values, &path).unwrap();
        let (w2, v2): (Vec<f64>, Vec<f64>) = load_spectrum_csv(&path).unwrap();
        assert_eq!(w2, waves);
        assert_eq!(v2, values, "shortest-round-trip formatting must parse back exactly");
    }

    #[test]
    fn matrix_csv_round_trips_exactly() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cov.csv");
        let m = SquareMatrix::from_flat(2, vec![1.5, -0.25, -0.25, 2.0 / 3.0]).unwrap();
        save_matrix_csv(&m, &path).unwrap();
        let back: SquareMatrix = load_matrix_csv(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn pixel_values_csv_round_trips_and_rejects_holes() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("cl.csv");
        let values = vec![0.0, 1.5, 2.5, 0.0, 0.25, 0.0];
        save_pixel_values_csv(2, 3, &values, "cl_ppm_m", &path).unwrap();
        let (rows, cols, back): (usize, usize, Vec<f64>) = load_pixel_values_csv(&path).unwrap();
        assert_eq!((rows, cols), (2, 3));
        assert_eq!(back, values);

        let text = fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(6).collect();
        fs::write(&path, truncated.join("\n")).unwrap();
        assert!(load_pixel_values_csv::<f64>(&path).is_err());
    }
}
