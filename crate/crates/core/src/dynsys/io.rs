//! Dataset persistence: a line-oriented text format (`.fwdt`) and a compact
//! binary one (`.fwdb`).
//!
//! Both carry the same self-describing header (system name, dimensions, step
//! size, control bounds, physical parameters, per-episode provenance).
//! Text rows print floats with Rust's shortest round-trip formatting and the
//! binary body stores raw little-endian f64, so save/load is lossless in
//! either encoding.

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Episode, SystemKind, SystemSpec};

/// Magic prefix of the binary encoding.
pub const BINARY_MAGIC: &[u8; 4] = b"FWDB";
/// Current version of the binary encoding.
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("not a binary dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported binary dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dataset extension '{0}' (expected .fwdt or .fwdb)")]
    UnknownExtension(String),
}

fn parse_err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { line, msg: msg.into() }
}

fn header_text(dataset: &Dataset) -> String {
    let spec = &dataset.spec;
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    out.push_str(&format!("system={}\n", spec.name()));
    out.push_str(&format!("state_dim={}\n", spec.state_dim));
    out.push_str(&format!("action_dim={}\n", spec.action_dim));
    out.push_str(&format!("dt={}\n", spec.dt));
    out.push_str(&format!("action_low={}\n", join(&spec.action_low)));
    out.push_str(&format!("action_high={}\n", join(&spec.action_high)));
    for (k, v) in &spec.params {
        out.push_str(&format!("param.{k}={v}\n"));
    }
    out.push_str(&format!("provenance={}\n", dataset.provenance.join(",")));
    out
}

struct Header {
    spec: SystemSpec,
    provenance: Vec<String>,
    lines_consumed: usize,
}

fn parse_header(text: &str, base_line: usize) -> Result<Header, DataError> {
    let mut system = None;
    let mut state_dim = None;
    let mut action_dim = None;
    let mut dt = None;
    let mut action_low = None;
    let mut action_high = None;
    let mut params = BTreeMap::new();
    let mut provenance = Vec::new();
    let mut consumed = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = base_line + i + 1;
        let line = raw.trim();
        if line.is_empty() {
            consumed += 1;
            continue;
        }
        if line.starts_with("episode ") {
            break;
        }
        consumed += 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("expected key=value, got '{line}'")))?;
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad number '{v}' for {key}")))
        };
        let parse_vec = |v: &str| -> Result<Vec<f64>, DataError> {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, format!("bad number '{x}' in {key}")))
                })
                .collect()
        };
        match key {
            "system" => system = Some(value.to_string()),
            "state_dim" => {
                state_dim = Some(value.parse::<usize>().map_err(|_| {
                    parse_err(line_no, format!("bad count '{value}' for state_dim"))
                })?)
            }
            "action_dim" => {
                action_dim = Some(value.parse::<usize>().map_err(|_| {
                    parse_err(line_no, format!("bad count '{value}' for action_dim"))
                })?)
            }
            "dt" => dt = Some(parse_f64(value)?),
            "action_low" => action_low = Some(parse_vec(value)?),
            "action_high" => action_high = Some(parse_vec(value)?),
            "provenance" => {
                provenance = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.to_string())
                    .collect()
            }
            _ => {
                if let Some(name) = key.strip_prefix("param.") {
                    params.insert(name.to_string(), parse_f64(value)?);
                } else {
                    return Err(parse_err(line_no, format!("unknown header key '{key}'")));
                }
            }
        }
    }

    let line_no = base_line + consumed;
    let missing = |what: &str| parse_err(line_no, format!("header is missing '{what}'"));
    let system = system.ok_or_else(|| missing("system"))?;
    let kind = SystemKind::parse(&system)
        .ok_or_else(|| parse_err(line_no, format!("unknown system '{system}'")))?;
    let mut spec = match kind {
        SystemKind::Pendulum => SystemSpec::pendulum(),
        SystemKind::MassSpringDamper => SystemSpec::msd(),
    };
    let state_dim = state_dim.ok_or_else(|| missing("state_dim"))?;
    let action_dim = action_dim.ok_or_else(|| missing("action_dim"))?;
    if state_dim != spec.state_dim || action_dim != spec.action_dim {
        return Err(parse_err(
            line_no,
            format!(
                "system '{system}' has dims ({}, {}), file declares ({state_dim}, {action_dim})",
                spec.state_dim, spec.action_dim
            ),
        ));
    }
    spec.dt = dt.ok_or_else(|| missing("dt"))?;
    spec.action_low = action_low.ok_or_else(|| missing("action_low"))?;
    spec.action_high = action_high.ok_or_else(|| missing("action_high"))?;
    if spec.action_low.len() != action_dim || spec.action_high.len() != action_dim {
        return Err(parse_err(line_no, "action bound width differs from action_dim"));
    }
    for (k, v) in params {
        spec.params.insert(k, v);
    }
    Ok(Header { spec, provenance, lines_consumed: consumed })
}

/// Writes the text encoding.
pub fn save_dataset_text<W: Write>(mut w: W, dataset: &Dataset) -> Result<(), DataError> {
    let mut out = header_text(dataset);
    for episode in &dataset.episodes {
        out.push_str(&format!("episode {}\n", episode.len()));
        for t in 0..episode.len() {
            let mut row = String::new();
            for v in episode.state(t) {
                row.push_str(&v.to_string());
                row.push(' ');
            }
            for (i, v) in episode.action(t).iter().enumerate() {
                if i > 0 {
                    row.push(' ');
                }
                row.push_str(&v.to_string());
            }
            row.push('\n');
            out.push_str(&row);
        }
        let last = episode.state(episode.len());
        let row: Vec<String> = last.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads the text encoding.
pub fn load_dataset_text<R: Read>(r: R) -> Result<Dataset, DataError> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let header = parse_header(&text, 0)?;
    let n = header.spec.state_dim;
    let m = header.spec.action_dim;

    let mut episodes = Vec::new();
    let mut lines = text.lines().enumerate().skip(header.lines_consumed).peekable();
    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let len: usize = line
            .strip_prefix("episode ")
            .ok_or_else(|| parse_err(line_no, format!("expected 'episode <len>', got '{line}'")))?
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, "bad episode length"))?;
        if len == 0 {
            return Err(parse_err(line_no, "episode length must be positive"));
        }
        let mut states = Vec::with_capacity(len + 1);
        let mut actions = Vec::with_capacity(len);
        for row_idx in 0..=len {
            let (idx, raw) = lines
                .next()
                .ok_or_else(|| parse_err(line_no, "episode truncated"))?;
            let row_line = idx + 1;
            let want = if row_idx < len { n + m } else { n };
            let nums: Vec<f64> = raw
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(row_line, format!("bad number '{tok}'")))
                })
                .collect::<Result<_, _>>()?;
            if nums.len() != want {
                return Err(parse_err(
                    row_line,
                    format!("expected {want} numbers, got {}", nums.len()),
                ));
            }
            states.push(nums[..n].to_vec());
            if row_idx < len {
                actions.push(nums[n..].to_vec());
            }
        }
        episodes.push(Episode::new(states, actions));
    }
    finish_load(header, episodes)
}

fn finish_load(header: Header, episodes: Vec<Episode>) -> Result<Dataset, DataError> {
    if episodes.is_empty() {
        return Err(parse_err(0, "dataset contains no episodes"));
    }
    let provenance = if header.provenance.is_empty() {
        vec!["unknown".to_string(); episodes.len()]
    } else if header.provenance.len() == episodes.len() {
        header.provenance
    } else {
        return Err(parse_err(
            0,
            format!(
                "provenance lists {} tags for {} episodes",
                header.provenance.len(),
                episodes.len()
            ),
        ));
    };
    Ok(Dataset::new(header.spec, episodes, provenance))
}

/// Writes the binary encoding.
pub fn save_dataset_binary<W: Write>(mut w: W, dataset: &Dataset) -> Result<(), DataError> {
    let header = header_text(dataset);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    w.write_all(&(dataset.episodes.len() as u32).to_le_bytes())?;
    for episode in &dataset.episodes {
        w.write_all(&(episode.len() as u32).to_le_bytes())?;
        for s in episode.states() {
            for v in s {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for a in episode.actions() {
            for v in a {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads the binary encoding.
pub fn load_dataset_binary<R: Read>(mut r: R) -> Result<Dataset, DataError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != BINARY_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header_str = String::from_utf8(header_bytes)
        .map_err(|_| parse_err(0, "header is not valid UTF-8"))?;
    let header = parse_header(&header_str, 0)?;
    let n = header.spec.state_dim;
    let m = header.spec.action_dim;

    let n_episodes = read_u32(&mut r)? as usize;
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let len = read_u32(&mut r)? as usize;
        if len == 0 {
            return Err(parse_err(0, "episode length must be positive"));
        }
        let mut states = Vec::with_capacity(len + 1);
        for _ in 0..=len {
            states.push(read_f64_row(&mut r, n)?);
        }
        let mut actions = Vec::with_capacity(len);
        for _ in 0..len {
            actions.push(read_f64_row(&mut r, m)?);
        }
        episodes.push(Episode::new(states, actions));
    }
    finish_load(header, episodes)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64_row<R: Read>(r: &mut R, width: usize) -> Result<Vec<f64>, DataError> {
    let mut row = Vec::with_capacity(width);
    let mut buf = [0u8; 8];
    for _ in 0..width {
        r.read_exact(&mut buf)?;
        row.push(f64::from_le_bytes(buf));
    }
    Ok(row)
}

/// Saves to `.fwdt` (text) or `.fwdb` (binary) depending on the extension.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<(), DataError> {
    let file = BufWriter::new(std::fs::File::create(path)?);
    match extension(path)? {
        "fwdt" => save_dataset_text(file, dataset),
        _ => save_dataset_binary(file, dataset),
    }
}

/// Loads `.fwdt` or `.fwdb` depending on the extension.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let file = BufReader::new(std::fs::File::open(path)?);
    match extension(path)? {
        "fwdt" => load_dataset_text(file),
        _ => load_dataset_binary(file),
    }
}

fn extension(path: &Path) -> Result<&'static str, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("fwdt") => Ok("fwdt"),
        Some("fwdb") => Ok("fwdb"),
        other => Err(DataError::UnknownExtension(
            other.unwrap_or("<none>").to_string(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::generate_dataset;

    fn sample_dataset() -> Dataset {
        let spec = SystemSpec::pendulum();
        let mix = vec!["random".to_string(), "sinusoid".to_string()];
        generate_dataset(&spec, &mix, 3, 17, 42).unwrap()
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let d = sample_dataset();
        let mut buf = Vec::new();
        save_dataset_text(&mut buf, &d).unwrap();
        let back = load_dataset_text(buf.as_slice()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn binary_round_trip_is_lossless() {
        let d = sample_dataset();
        let mut buf = Vec::new();
        save_dataset_binary(&mut buf, &d).unwrap();
        let back = load_dataset_binary(buf.as_slice()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn saves_are_byte_deterministic() {
        let d = sample_dataset();
        let mut a = Vec::new();
        let mut b = Vec::new();
        save_dataset_binary(&mut a, &d).unwrap();
        save_dataset_binary(&mut b, &d).unwrap();
        assert_eq!(a, b);
        let mut ta = Vec::new();
        let mut tb = Vec::new();
        save_dataset_text(&mut ta, &d).unwrap();
        save_dataset_text(&mut tb, &d).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn text_format_looks_as_documented() {
        let d = sample_dataset();
        let mut buf = Vec::new();
        save_dataset_text(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("system=pendulum\nstate_dim=2\naction_dim=1\ndt=0.05\n"));
        assert!(text.contains("action_low=-2\naction_high=2\n"));
        assert!(text.contains("param.g=9.81\n"));
        assert!(text.contains("provenance=random,sinusoid,random\n"));
        assert!(text.contains("episode 17\n"));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = load_dataset_binary(&b"NOPE"[..]).unwrap_err();
        assert!(matches!(err, DataError::BadMagic));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut buf = Vec::new();
        buf.extend_from_slice(BINARY_MAGIC);
        buf.extend_from_slice(&99u32.to_le_bytes());
        let err = load_dataset_binary(buf.as_slice()).unwrap_err();
        assert!(matches!(err, DataError::UnsupportedVersion(99)));
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "system=msd\nstate_dim=2\naction_dim=1\ndt=0.05\naction_low=-1\naction_high=1\nprovenance=random\nepisode 1\n0 0 0\n0 oops\n";
        let err = load_dataset_text(text.as_bytes()).unwrap_err();
        match err {
            DataError::Parse { line, msg } => {
                assert_eq!(line, 10);
                assert!(msg.contains("oops"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_is_rejected() {
        let text = "system=msd\nstate_dim=2\naction_dim=1\ndt=0.05\naction_low=-1\naction_high=1\nepisode 1\n0 0\n0 0\n";
        let err = load_dataset_text(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 8, .. }), "{err:?}");
    }

    #[test]
    fn unknown_system_is_rejected() {
        let text = "system=cartpole\nstate_dim=4\naction_dim=1\ndt=0.05\naction_low=-1\naction_high=1\nepisode 1\n";
        let err = load_dataset_text(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Parse { .. }));
        assert!(err.to_string().contains("cartpole"));
    }

    #[test]
    fn header_overrides_params_and_dt() {
        let text = "system=msd\nstate_dim=2\naction_dim=1\ndt=0.01\naction_low=-3\naction_high=3\nparam.k=2.5\nprovenance=random\nepisode 1\n0.5 0 1\n0.5 0\n";
        let d = load_dataset_text(text.as_bytes()).unwrap();
        assert_eq!(d.spec.dt, 0.01);
        assert_eq!(d.spec.params["k"], 2.5);
        assert_eq!(d.spec.params["m"], 1.0);
        assert_eq!(d.spec.action_low, vec![-3.0]);
    }

    #[test]
    fn file_extension_dispatch() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample_dataset();
        let text_path = dir.path().join("data.fwdt");
        let bin_path = dir.path().join("data.fwdb");
        save_dataset(&text_path, &d).unwrap();
        save_dataset(&bin_path, &d).unwrap();
        assert_eq!(load_dataset(&text_path).unwrap(), d);
        assert_eq!(load_dataset(&bin_path).unwrap(), d);
        let err = save_dataset(&dir.path().join("data.csv"), &d).unwrap_err();
        assert!(matches!(err, DataError::UnknownExtension(_)));
    }
}
