use std::fmt::Write as _;

use super::{parse_error, RawPoints};
use crate::cloud::Vec3;
use crate::error::{ParseLocation, Result};

/// Blank lines and lines starting with `#` are skipped.
pub(super) fn decode(bytes: &[u8], source: &str) -> Result<RawPoints> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        parse_error(source, ParseLocation::Byte(e.valid_up_to() as u64), "file is not valid UTF-8")
    })?;
    let mut out = RawPoints {
        positions: Vec::new(),
        labels: Vec::new(),
    };
    for (k, line) in text.lines().enumerate() {
        let loc = ParseLocation::Line(k + 1);
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let [x, y, z, l] = words[..] else {
            return Err(parse_error(source, loc, format!("expected `x y z label`, found {} fields", words.len())));
        };
        let mut xyz = [0.0; 3];
        for (slot, w) in xyz.iter_mut().zip([x, y, z]) {
            *slot = w.parse().map_err(|_| parse_error(source, loc, format!("bad coordinate `{w}`")))?;
        }
        let label = l
            .parse::<u32>()
            .map_err(|_| parse_error(source, loc, format!("bad label `{l}`")))?;
        out.positions.push(Vec3::from(xyz));
        out.labels.push((label, loc));
    }
    Ok(out)
}

pub(super) fn encode(positions: &[Vec3], labels: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut s = String::with_capacity(positions.len() * 32);
    for (p, l) in positions.iter().zip(labels) {
        let _ = writeln!(s, "{} {} {} {l}", p.x, p.y, p.z);
    }
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let raw = decode(b"0.5 1.0 2.0 3", "mem").unwrap();
        assert_eq!(raw.positions, vec![Vec3::new(0.5, 1.0, 2.0)]);
        assert_eq!(raw.labels[0].0, 3);
    }

    #[test]
    fn empty_and_commented() {
        assert!(decode(b"", "mem").unwrap().positions.is_empty());
        let raw = decode(b"# header\n\n1\t2  3 4\n", "mem").unwrap();
        assert_eq!(raw.positions.len(), 1);
        assert_eq!(raw.labels[0].1, ParseLocation::Line(3));
    }

    #[test]
    fn bad_rows() {
        for bad in ["1 2 3", "1 2 3 4 5", "1 2 nan? 4", "1 2 3 -1", "1 2 3 2.5"] {
            let e = decode(format!("0 0 0 0\n{bad}\n").as_bytes(), "mem").err().unwrap();
            assert!(e.to_string().contains("line 2"), "{bad}: {e}");
        }
    }

    #[test]
    fn shortest_repr_is_exact() {
        let p = Vec3::new(0.1 + 0.2, -1e-17, 123456.789e10);
        let text = encode(&[p], [5u16].into_iter());
        assert_eq!(decode(&text, "mem").unwrap().positions[0], p);
    }
}
