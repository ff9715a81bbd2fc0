use std::fmt::Write as _;

use super::{parse_error, FileFormat, RawPoints};
use crate::cloud::Vec3;
use crate::error::{ParseLocation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: FileFormat,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    body: usize,
    /// Number of header lines, so ascii rows can report file line numbers.
    lines: usize,
}

fn parse_header(bytes: &[u8], source: &str) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(parse_error(source, ParseLocation::Line(line_no + 1), "header is not terminated by end_header"));
        };
        line_no += 1;
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_error(source, ParseLocation::Line(line_no), "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        let err = |msg: String| parse_error(source, ParseLocation::Line(line_no), msg);
        let words: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if words != ["ply"] {
                return Err(err("missing `ply` magic line".into()));
            }
            continue;
        }
        match words.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match words.get(1..) {
                    Some(["ascii", _]) => FileFormat::PlyAscii,
                    Some(["binary_little_endian", _]) => FileFormat::PlyBinaryLe,
                    Some(["binary_big_endian", _]) => return Err(err("big-endian PLY is not supported".into())),
                    _ => return Err(err(format!("bad format line `{line}`"))),
                });
            }
            Some("element") => {
                let [_, name, count] = words[..] else {
                    return Err(err(format!("bad element line `{line}`")));
                };
                let count = count
                    .parse()
                    .map_err(|_| err(format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(err("property before any element".into()));
                };
                let prop = match words[1..] {
                    ["list", count, item, _] => Property::List {
                        count: Scalar::parse(count).filter(|s| s.is_integer()).ok_or_else(|| err(format!("bad list count type `{count}`")))?,
                        item: Scalar::parse(item).ok_or_else(|| err(format!("bad list item type `{item}`")))?,
                    },
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty).ok_or_else(|| err(format!("unknown property type `{ty}`")))?,
                    },
                    _ => return Err(err(format!("bad property line `{line}`"))),
                };
                element.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(err(format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_error(source, ParseLocation::Line(line_no), "header has no format line"))?;
    Ok(Header {
        format,
        elements,
        body: pos,
        lines: line_no,
    })
}

/// Which of the two PLY encodings a file uses.
pub(super) fn detect(bytes: &[u8], source: &str) -> Result<FileFormat> {
    Ok(parse_header(bytes, source)?.format)
}

/// Column of each required vertex property.
struct Columns {
    xyz: [usize; 3],
    label: usize,
    types: Vec<Scalar>,
}

fn vertex_columns(element: &Element, source: &str, line: usize) -> Result<Columns> {
    let mut types = Vec::new();
    let find = |want: &str| -> Option<usize> {
        element.props.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
    };
    let xyz = [find("x"), find("y"), find("z")];
    let label = find("label");
    for p in &element.props {
        match p {
            Property::Scalar { ty, .. } => types.push(*ty),
            Property::List { .. } => {
                return Err(parse_error(source, ParseLocation::Line(line), "list properties on vertices are not supported"))
            }
        }
    }
    match (xyz, label) {
        ([Some(x), Some(y), Some(z)], Some(label)) => {
            if !types[label].is_integer() {
                return Err(parse_error(source, ParseLocation::Line(line), "label property must be an integer type"));
            }
            Ok(Columns { xyz: [x, y, z], label, types })
        }
        _ => Err(parse_error(source, ParseLocation::Line(line), "vertex element needs x, y, z and label properties")),
    }
}

pub(super) fn decode(bytes: &[u8], expected: FileFormat, source: &str) -> Result<RawPoints> {
    let header = parse_header(bytes, source)?;
    if header.format != expected {
        return Err(parse_error(
            source,
            ParseLocation::Line(2),
            format!("file is {} but {} was requested", header.format, expected),
        ));
    }
    let Some(v) = header.elements.iter().position(|e| e.name == "vertex") else {
        return Err(parse_error(source, ParseLocation::Line(header.lines), "no vertex element"));
    };
    let columns = vertex_columns(&header.elements[v], source, header.lines)?;
    let before = &header.elements[..v];
    let is_last = v + 1 == header.elements.len();
    let count = header.elements[v].count;
    match header.format {
        FileFormat::PlyAscii => decode_ascii(bytes, &header, before, count, &columns, is_last, source),
        _ => decode_binary(bytes, &header, before, count, &columns, is_last, source),
    }
}

fn integer_label(value: f64) -> Option<u32> {
    (value.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&value)).then_some(value as u32)
}

fn decode_ascii(
    bytes: &[u8],
    header: &Header,
    before: &[Element],
    count: usize,
    columns: &Columns,
    is_last: bool,
    source: &str,
) -> Result<RawPoints> {
    let body = std::str::from_utf8(&bytes[header.body..])
        .map_err(|_| parse_error(source, ParseLocation::Line(header.lines + 1), "body is not valid UTF-8"))?;
    let mut lines = body.lines().enumerate().map(|(k, l)| (header.lines + 1 + k, l));
    let skip: usize = before.iter().map(|e| e.count).sum();
    for _ in 0..skip {
        if lines.next().is_none() {
            return Err(parse_error(source, ParseLocation::Line(header.lines + 1), "file ends inside an element before the vertices"));
        }
    }
    let mut out = RawPoints {
        positions: Vec::with_capacity(count),
        labels: Vec::with_capacity(count),
    };
    let n_props = columns.types.len();
    let mut values = vec![0.0; n_props];
    for k in 0..count {
        let Some((line_no, line)) = lines.next() else {
            return Err(parse_error(
                source,
                ParseLocation::Line(header.lines + skip + k + 1),
                format!("expected {count} vertices, found {k}"),
            ));
        };
        let loc = ParseLocation::Line(line_no);
        let mut words = line.split_whitespace();
        for (slot, ty) in values.iter_mut().zip(&columns.types) {
            let w = words.next().ok_or_else(|| parse_error(source, loc, format!("expected {n_props} values")))?;
            *slot = if ty.is_integer() {
                w.parse::<i64>().map(|x| x as f64).map_err(|_| parse_error(source, loc, format!("bad integer `{w}`")))?
            } else {
                w.parse::<f64>().map_err(|_| parse_error(source, loc, format!("bad number `{w}`")))?
            };
        }
        if words.next().is_some() {
            return Err(parse_error(source, loc, format!("more than {n_props} values")));
        }
        out.positions.push(Vec3::new(values[columns.xyz[0]], values[columns.xyz[1]], values[columns.xyz[2]]));
        let label = integer_label(values[columns.label]).ok_or_else(|| parse_error(source, loc, "label is not a non-negative integer"))?;
        out.labels.push((label, loc));
    }
    if is_last {
        if let Some((line_no, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(parse_error(source, ParseLocation::Line(line_no), "data after the last element"));
        }
    }
    Ok(out)
}

fn decode_binary(
    bytes: &[u8],
    header: &Header,
    before: &[Element],
    count: usize,
    columns: &Columns,
    is_last: bool,
    source: &str,
) -> Result<RawPoints> {
    let truncated = |at: usize| parse_error(source, ParseLocation::Byte(at as u64), "file is truncated");
    let mut pos = header.body;
    for e in before {
        for _ in 0..e.count {
            for p in &e.props {
                match p {
                    Property::Scalar { ty, .. } => pos += ty.size(),
                    Property::List { count, item } => {
                        let head = bytes.get(pos..pos + count.size()).ok_or_else(|| truncated(pos))?;
                        let n = count.read_le(head);
                        if n < 0.0 {
                            return Err(parse_error(source, ParseLocation::Byte(pos as u64), "negative list length"));
                        }
                        pos += count.size() + n as usize * item.size();
                    }
                }
            }
        }
    }
    let offsets: Vec<usize> = columns
        .types
        .iter()
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += t.size();
            Some(o)
        })
        .collect();
    let stride: usize = columns.types.iter().map(|t| t.size()).sum();
    let end = count
        .checked_mul(stride)
        .and_then(|n| n.checked_add(pos))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| truncated(bytes.len()))?;
    let mut out = RawPoints {
        positions: Vec::with_capacity(count),
        labels: Vec::with_capacity(count),
    };
    let read = |row: &[u8], c: usize| columns.types[c].read_le(&row[offsets[c]..]);
    for (k, row) in bytes[pos..end].chunks_exact(stride.max(1)).take(count).enumerate() {
        let at = pos + k * stride;
        out.positions.push(Vec3::new(read(row, columns.xyz[0]), read(row, columns.xyz[1]), read(row, columns.xyz[2])));
        let label = integer_label(read(row, columns.label))
            .ok_or_else(|| parse_error(source, ParseLocation::Byte(at as u64), "label is negative"))?;
        out.labels.push((label, ParseLocation::Byte(at as u64)));
    }
    if is_last && end != bytes.len() {
        return Err(parse_error(source, ParseLocation::Byte(end as u64), "data after the last element"));
    }
    Ok(out)
}

fn header(format: &str, n: usize, coord: &str, taxonomy: &str) -> String {
    format!(
        "ply\nformat {format} 1.0\ncomment taxonomy {taxonomy}\nelement vertex {n}\n\
         property {coord} x\nproperty {coord} y\nproperty {coord} z\nproperty ushort label\nend_header\n"
    )
}

pub(super) fn encode_ascii(positions: &[Vec3], labels: impl Iterator<Item = u16>, taxonomy: &str) -> Vec<u8> {
    let mut s = header("ascii", positions.len(), "double", taxonomy);
    for (p, l) in positions.iter().zip(labels) {
        let _ = writeln!(s, "{} {} {} {l}", p.x, p.y, p.z);
    }
    s.into_bytes()
}

pub(super) fn encode_binary(positions: &[Vec3], labels: impl Iterator<Item = u16>, taxonomy: &str) -> Vec<u8> {
    let mut out = header("binary_little_endian", positions.len(), "float", taxonomy).into_bytes();
    out.reserve(positions.len() * 14);
    for (p, l) in positions.iter().zip(labels) {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode_str(s: &str, f: FileFormat) -> Result<RawPoints> {
        decode(s.as_bytes(), f, "mem")
    }

    #[test]
    fn empty_cloud_has_zero_count_header() {
        let bytes = encode_ascii(&[], std::iter::empty(), "toy");
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(decode(&bytes, FileFormat::PlyAscii, "mem").unwrap().positions.is_empty());
        let bin = encode_binary(&[], std::iter::empty(), "toy");
        assert!(decode(&bin, FileFormat::PlyBinaryLe, "mem").unwrap().positions.is_empty());
    }

    #[test]
    fn header_count_matches_points() {
        let pts = vec![Vec3::zeros(); 5];
        let bin = encode_binary(&pts, [1u16; 5].into_iter(), "toy");
        let head = String::from_utf8_lossy(&bin[..bin.len() - 5 * 14]).to_string();
        assert!(head.contains("element vertex 5\n"));
        assert!(head.ends_with("end_header\n"));
    }

    #[test]
    fn foreign_layouts_are_read() {
        let text = "ply\r\nformat ascii 1.0\r\ncomment from elsewhere\r\nelement camera 1\r\nproperty float f\r\n\
                    element vertex 2\r\nproperty uchar label\r\nproperty float z\r\nproperty float y\r\nproperty float x\r\n\
                    property int extra\r\nelement face 1\r\nproperty list uchar int vertex_indices\r\nend_header\r\n\
                    9.5\r\n4 3 2 1 -7\r\n5 0.5 0.25 0.125 0\r\n3 0 1 1\r\n";
        let raw = decode_str(text, FileFormat::PlyAscii).unwrap();
        assert_eq!(raw.positions, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.125, 0.25, 0.5)]);
        assert_eq!(raw.labels.iter().map(|l| l.0).collect::<Vec<_>>(), vec![4, 5]);
    }

    #[test]
    fn binary_with_list_element_first() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement face 2\nproperty list uchar int idx\n\
                          element vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty uint label\nend_header\n"
            .to_vec();
        bytes.extend_from_slice(&[1, 7, 0, 0, 0]);
        bytes.extend_from_slice(&[0]);
        for c in [1.5f64, -2.0, 0.25] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        bytes.extend_from_slice(&6u32.to_le_bytes());
        let raw = decode(&bytes, FileFormat::PlyBinaryLe, "mem").unwrap();
        assert_eq!(raw.positions, vec![Vec3::new(1.5, -2.0, 0.25)]);
        assert_eq!(raw.labels[0].0, 6);
    }

    #[test]
    fn malformed_inputs_report_locations() {
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
                     property ushort label\nend_header\n1 2 3 0\n";
        let e = decode_str(short, FileFormat::PlyAscii).err().unwrap();
        assert!(e.to_string().contains("line 10"), "{e}");
        let bad = short.replace("1 2 3 0\n", "1 2 x 0\n0 0 0 0\n");
        let e = decode_str(&bad, FileFormat::PlyAscii).err().unwrap();
        assert!(e.to_string().contains("line 9"), "{e}");
        let e = decode_str("ply\nformat ascii 1.0\n", FileFormat::PlyAscii).err().unwrap();
        assert!(e.to_string().contains("end_header"), "{e}");
        let e = decode_str("plx\n", FileFormat::PlyAscii).err().unwrap();
        assert!(e.to_string().contains("line 1"), "{e}");

        let mut bin = encode_binary(&[Vec3::zeros(); 3], [0u16; 3].into_iter(), "toy");
        bin.truncate(bin.len() - 1);
        let e = decode(&bin, FileFormat::PlyBinaryLe, "mem").err().unwrap();
        assert!(e.to_string().contains("byte"), "{e}");
    }

    #[test]
    fn format_mismatch_and_trailing_data_are_errors() {
        let bin = encode_binary(&[Vec3::zeros()], [0u16].into_iter(), "toy");
        assert!(decode(&bin, FileFormat::PlyAscii, "mem").is_err());
        let mut long = bin.clone();
        long.push(0);
        assert!(decode(&long, FileFormat::PlyBinaryLe, "mem").is_err());
        let mut text = String::from_utf8(encode_ascii(&[Vec3::zeros()], [0u16].into_iter(), "toy")).unwrap();
        text.push_str("1 1 1 1\n");
        assert!(decode_str(&text, FileFormat::PlyAscii).is_err());
    }
}
