//! OFF, OBJ and PLY readers plus small writers.
//!
//! All indices are 0-based once loaded; OBJ's 1-based (and negative, relative)
//! indices are converted on the way in. Polygons with more than three corners
//! are fan-triangulated around their first corner.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::Vector3;

use super::{MeshError, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        ext.parse().ok()
    }
}

impl FromStr for MeshFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "obj" => Ok(Self::Obj),
            "ply" => Ok(Self::Ply),
            other => Err(format!("unknown mesh format '{other}'")),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriMesh, MeshError> {
    let bytes = fs::read(path)?;
    read_mesh(&bytes, format)
}

pub fn read_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriMesh, MeshError> {
    let (vertices, triangles) = match format {
        MeshFormat::Off => parse_off(text(bytes)?)?,
        MeshFormat::Obj => parse_obj(text(bytes)?)?,
        MeshFormat::Ply => parse_ply(bytes)?,
    };
    TriMesh::new(vertices, triangles)
}

fn text(bytes: &[u8]) -> Result<&str, MeshError> {
    std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
        line: 0,
        msg: format!("invalid utf-8: {e}"),
    })
}

fn perr(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, format!("invalid {what} '{tok}'")))
}

fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len() - 1 {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

type Parsed = (Vec<Vector3<f64>>, Vec<[usize; 3]>);

fn parse_off(src: &str) -> Result<Parsed, MeshError> {
    // Tokens with their line numbers, comments stripped.
    let mut lines = src
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line_no, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("OFF") {
        return Err(perr(line_no, "missing OFF header"));
    }
    let rest: Vec<&str> = head.collect();
    let (counts_line, counts) = if rest.is_empty() {
        let (n, l) = lines.next().ok_or_else(|| perr(line_no, "missing counts"))?;
        (n, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (line_no, rest)
    };
    let mut it = counts.into_iter();
    let nv: usize = parse_num(it.next(), counts_line, "vertex count")?;
    let nf: usize = parse_num(it.next(), counts_line, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, l) = lines.next().ok_or_else(|| perr(counts_line, "unexpected end of vertex list"))?;
        let mut t = l.split_whitespace();
        let x = parse_num(t.next(), n, "x")?;
        let y = parse_num(t.next(), n, "y")?;
        let z = parse_num(t.next(), n, "z")?;
        vertices.push(Vector3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, l) = lines.next().ok_or_else(|| perr(counts_line, "unexpected end of face list"))?;
        let mut t = l.split_whitespace();
        let k: usize = parse_num(t.next(), n, "face size")?;
        if k < 3 {
            return Err(perr(n, format!("face with {k} corners")));
        }
        let poly = (0..k)
            .map(|_| parse_num(t.next(), n, "vertex index"))
            .collect::<Result<Vec<usize>, _>>()?;
        fan(&poly, &mut triangles);
    }
    Ok((vertices, triangles))
}

fn parse_obj(src: &str) -> Result<Parsed, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let n = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => {
                let x = parse_num(t.next(), n, "x")?;
                let y = parse_num(t.next(), n, "y")?;
                let z = parse_num(t.next(), n, "z")?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let poly = t
                    .map(|tok| {
                        let idx = tok.split('/').next().unwrap_or("");
                        let v: i64 = idx.parse().map_err(|_| perr(n, format!("invalid face index '{tok}'")))?;
                        let resolved = if v > 0 {
                            v - 1
                        } else if v < 0 {
                            vertices.len() as i64 + v
                        } else {
                            return Err(perr(n, "face index 0 is invalid in OBJ"));
                        };
                        usize::try_from(resolved).map_err(|_| perr(n, format!("face index '{tok}' out of range")))
                    })
                    .collect::<Result<Vec<usize>, _>>()?;
                if poly.len() < 3 {
                    return Err(perr(n, format!("face with {} corners", poly.len())));
                }
                fan(&poly, &mut triangles);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str, line: usize) -> Result<Self, MeshError> {
        Ok(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(perr(line, format!("unknown PLY type '{other}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => LittleEndian::read_i16(b) as f64,
            Self::U16 => LittleEndian::read_u16(b) as f64,
            Self::I32 => LittleEndian::read_i32(b) as f64,
            Self::U32 => LittleEndian::read_u32(b) as f64,
            Self::F32 => LittleEndian::read_f32(b) as f64,
            Self::F64 => LittleEndian::read_f64(b),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Reads one element instance as a vector of property values (lists flattened
/// into `Vec<f64>`), from either ASCII tokens or little-endian bytes.
trait PlySource {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, MeshError>;
}

struct AsciiSource<'a> {
    tokens: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl PlySource for AsciiSource<'_> {
    fn scalar(&mut self, _ty: Scalar) -> Result<f64, MeshError> {
        let (line, tok) = self
            .tokens
            .next()
            .ok_or_else(|| perr(self.last_line, "unexpected end of PLY body"))?;
        self.last_line = line;
        tok.parse().map_err(|_| perr(line, format!("invalid number '{tok}'")))
    }
}

struct BinarySource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PlySource for BinarySource<'_> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        let end = self.pos + ty.size();
        if end > self.bytes.len() {
            return Err(perr(0, "unexpected end of binary PLY body"));
        }
        let v = ty.read_le(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(v)
    }
}

fn parse_ply(bytes: &[u8]) -> Result<Parsed, MeshError> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| perr(1, "missing end_header"))?;
    let mut body_start = header_end + END.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = text(&bytes[..header_end])?;

    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(perr(1, "missing ply magic")),
    }
    for (i, l) in lines {
        let n = i + 1;
        let t: Vec<&str> = l.split_whitespace().collect();
        match t.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(perr(n, format!("unsupported PLY format '{other}'"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: parse_num(Some(count), n, "element count")?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, name] => elements
                .last_mut()
                .ok_or_else(|| perr(n, "property before element"))?
                .props
                .push(Property::List(name.to_string(), Scalar::parse(cty, n)?, Scalar::parse(ity, n)?)),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| perr(n, "property before element"))?
                .props
                .push(Property::Scalar(name.to_string(), Scalar::parse(ty, n)?)),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(perr(n, format!("unrecognized header line '{l}'"))),
        }
    }
    let binary = binary.ok_or_else(|| perr(2, "missing format line"))?;
    let body = &bytes[body_start.min(bytes.len())..];

    let mut source: Box<dyn PlySource> = if binary {
        Box::new(BinarySource { bytes: body, pos: 0 })
    } else {
        let body_text = text(body)?;
        let header_lines = header.lines().count() + 1;
        let it: Box<dyn Iterator<Item = (usize, &str)>> = Box::new(
            body_text
                .lines()
                .enumerate()
                .flat_map(move |(i, l)| l.split_whitespace().map(move |tok| (header_lines + i + 1, tok))),
        );
        Box::new(AsciiSource {
            tokens: it.peekable(),
            last_line: header_lines,
        })
    };

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        let xyz: Option<[usize; 3]> = if el.name == "vertex" {
            let find = |want: &str| {
                el.props
                    .iter()
                    .position(|p| matches!(p, Property::Scalar(name, _) if name == want))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(perr(0, "vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        let face_list = if el.name == "face" {
            Some(
                el.props
                    .iter()
                    .position(|p| matches!(p, Property::List(name, _, _) if name == "vertex_indices" || name == "vertex_index"))
                    .ok_or_else(|| perr(0, "face element lacks vertex_indices"))?,
            )
        } else {
            None
        };

        for _ in 0..el.count {
            let mut pos = [0.0; 3];
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => {
                        let v = source.scalar(*ty)?;
                        if let Some(xyz) = xyz {
                            if let Some(c) = xyz.iter().position(|&k| k == pi) {
                                pos[c] = v;
                            }
                        }
                    }
                    Property::List(_, cty, ity) => {
                        let len = source.scalar(*cty)?;
                        if len < 0.0 || len.fract() != 0.0 {
                            return Err(perr(0, "invalid list length"));
                        }
                        let items = (0..len as usize)
                            .map(|_| source.scalar(*ity))
                            .collect::<Result<Vec<f64>, _>>()?;
                        if face_list == Some(pi) {
                            if items.len() < 3 {
                                return Err(perr(0, format!("face with {} corners", items.len())));
                            }
                            let poly = items
                                .iter()
                                .map(|&x| {
                                    if x < 0.0 || x.fract() != 0.0 {
                                        Err(perr(0, format!("invalid vertex index {x}")))
                                    } else {
                                        Ok(x as usize)
                                    }
                                })
                                .collect::<Result<Vec<usize>, _>>()?;
                            fan(&poly, &mut triangles);
                        }
                    }
                }
            }
            if xyz.is_some() {
                vertices.push(Vector3::new(pos[0], pos[1], pos[2]));
            }
        }
    }
    Ok((vertices, triangles))
}

pub fn write_off<W: Write>(mut w: W, mesh: &TriMesh) -> io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.num_vertices(), mesh.num_triangles())?;
    for v in mesh.vertices() {
        writeln!(w, "{:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn write_obj<W: Write>(mut w: W, mesh: &TriMesh) -> io::Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// ASCII PLY with per-vertex `red`, `green`, `blue` uchar properties.
pub fn write_ply_colored<W: Write>(mut w: W, mesh: &TriMesh, colors: &[[u8; 3]]) -> io::Result<()> {
    assert_eq!(colors.len(), mesh.num_vertices(), "one color per vertex");
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.num_vertices())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    for p in ["red", "green", "blue"] {
        writeln!(w, "property uchar {p}")?;
    }
    writeln!(w, "element face {}", mesh.num_triangles())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (v, c) in mesh.vertices().iter().zip(colors) {
        writeln!(w, "{:?} {:?} {:?} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}
