//! Per-element operation traces and their line-oriented text form.
//!
//! ```text
//! # comment
//! cpe 0 0
//! dma_get op=flt main=0,4,64,256 ldm=0 tag=1
//! dma_wait tag=1
//! convert src=0 dst=1024 count=64 dir=f32_f64 order=rev
//! zero ldm=4096 bytes=512
//! kernel flavor=local reordered=1 flt=1024 in=2048 out=4096 k=4 n=16 c=8
//! bcast_row ldm=0 bytes=64
//! recv axis=col ldm=0 bytes=64
//! barrier tb=0
//! ```
//!
//! `main=base,rows,row_bytes,stride` describes a strided 2-D region.

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use kernel_model::GrainFlavor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::CpeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operand {
    Flt,
    In,
    Out,
}

impl Operand {
    pub const ALL: [Operand; 3] = [Operand::Flt, Operand::In, Operand::Out];

    pub fn name(&self) -> &'static str {
        match self {
            Operand::Flt => "flt",
            Operand::In => "in",
            Operand::Out => "out",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainRegion {
    pub base: usize,
    pub rows: usize,
    pub row_bytes: usize,
    pub stride: usize,
}

impl MainRegion {
    pub fn contiguous(base: usize, bytes: usize) -> Self {
        Self {
            base,
            rows: 1,
            row_bytes: bytes,
            stride: bytes,
        }
    }

    pub fn bytes(&self) -> Option<usize> {
        self.rows.checked_mul(self.row_bytes)
    }

    /// One past the last byte touched.
    pub fn end(&self) -> Option<usize> {
        if self.rows == 0 {
            return Some(self.base);
        }
        (self.rows - 1)
            .checked_mul(self.stride)?
            .checked_add(self.row_bytes)?
            .checked_add(self.base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvertDir {
    F32ToF64,
    F64ToF32,
}

/// Element order of an in-place-capable conversion. Widening in place must
/// run back to front, narrowing front to back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvertOrder {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommAxis {
    Row,
    Col,
}

impl CommAxis {
    pub fn name(&self) -> &'static str {
        match self {
            CommAxis::Row => "row",
            CommAxis::Col => "col",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceOp {
    DmaGet {
        operand: Operand,
        main: MainRegion,
        ldm: usize,
        tag: u32,
    },
    DmaPut {
        operand: Operand,
        main: MainRegion,
        ldm: usize,
        tag: u32,
    },
    DmaWait {
        tag: u32,
    },
    Convert {
        src: usize,
        dst: usize,
        count: usize,
        dir: ConvertDir,
        order: ConvertOrder,
    },
    ZeroFill {
        ldm: usize,
        bytes: usize,
    },
    /// `out[k×n] += flt[c×k]ᵀ · in[c×n]` on f64 LDM buffers.
    Microkernel {
        flavor: GrainFlavor,
        reordered: bool,
        flt: usize,
        inp: usize,
        out: usize,
        k: usize,
        n: usize,
        c: usize,
    },
    BcastRow {
        ldm: usize,
        bytes: usize,
    },
    BcastCol {
        ldm: usize,
        bytes: usize,
    },
    Recv {
        axis: CommAxis,
        ldm: usize,
        bytes: usize,
    },
    LocalBarrier {
        tb_id: usize,
    },
}

pub type Program = Vec<TraceOp>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

fn flavor_name(f: GrainFlavor) -> &'static str {
    f.name()
}

fn parse_flavor(s: &str) -> Option<GrainFlavor> {
    GrainFlavor::ALL.into_iter().find(|f| f.name() == s)
}

impl fmt::Display for TraceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let region = |m: &MainRegion| format!("{},{},{},{}", m.base, m.rows, m.row_bytes, m.stride);
        match self {
            TraceOp::DmaGet { operand, main, ldm, tag } => {
                write!(f, "dma_get op={} main={} ldm={ldm} tag={tag}", operand.name(), region(main))
            }
            TraceOp::DmaPut { operand, main, ldm, tag } => {
                write!(f, "dma_put op={} main={} ldm={ldm} tag={tag}", operand.name(), region(main))
            }
            TraceOp::DmaWait { tag } => write!(f, "dma_wait tag={tag}"),
            TraceOp::Convert { src, dst, count, dir, order } => {
                let dir = match dir {
                    ConvertDir::F32ToF64 => "f32_f64",
                    ConvertDir::F64ToF32 => "f64_f32",
                };
                let order = match order {
                    ConvertOrder::Forward => "fwd",
                    ConvertOrder::Reverse => "rev",
                };
                write!(f, "convert src={src} dst={dst} count={count} dir={dir} order={order}")
            }
            TraceOp::ZeroFill { ldm, bytes } => write!(f, "zero ldm={ldm} bytes={bytes}"),
            TraceOp::Microkernel { flavor, reordered, flt, inp, out, k, n, c } => write!(
                f,
                "kernel flavor={} reordered={} flt={flt} in={inp} out={out} k={k} n={n} c={c}",
                flavor_name(*flavor),
                u8::from(*reordered)
            ),
            TraceOp::BcastRow { ldm, bytes } => write!(f, "bcast_row ldm={ldm} bytes={bytes}"),
            TraceOp::BcastCol { ldm, bytes } => write!(f, "bcast_col ldm={ldm} bytes={bytes}"),
            TraceOp::Recv { axis, ldm, bytes } => {
                write!(f, "recv axis={} ldm={ldm} bytes={bytes}", axis.name())
            }
            TraceOp::LocalBarrier { tb_id } => write!(f, "barrier tb={tb_id}"),
        }
    }
}

/// Renders per-element programs; elements with empty programs are skipped.
pub fn format_trace<'a, I>(sections: I) -> String
where
    I: IntoIterator<Item = (CpeId, &'a [TraceOp])>,
{
    let mut out = String::new();
    for (cpe, ops) in sections {
        if ops.is_empty() {
            continue;
        }
        writeln!(out, "cpe {} {}", cpe.row, cpe.col).expect("write to String");
        for op in ops {
            writeln!(out, "{op}").expect("write to String");
        }
    }
    out
}

struct Fields<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Fields<'a> {
    fn new(line: usize, toks: &[&'a str], expected: &[&str]) -> Result<Self, TraceParseError> {
        let err = |msg: String| TraceParseError { line, msg };
        let mut map = BTreeMap::new();
        for tok in toks {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{tok}`")))?;
            if !expected.contains(&k) {
                return Err(err(format!("unknown key `{k}`")));
            }
            if map.insert(k, v).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
        }
        for k in expected {
            if !map.contains_key(k) {
                return Err(err(format!("missing key `{k}`")));
            }
        }
        Ok(Self { line, map })
    }

    fn str(&self, k: &str) -> &'a str {
        self.map[k]
    }

    fn err(&self, msg: String) -> TraceParseError {
        TraceParseError { line: self.line, msg }
    }

    fn num(&self, k: &str) -> Result<usize, TraceParseError> {
        let v = self.str(k);
        let n: u64 = v.parse().map_err(|_| self.err(format!("bad number `{v}` for `{k}`")))?;
        if n > 1 << 40 {
            return Err(self.err(format!("`{k}` too large")));
        }
        Ok(n as usize)
    }

    fn tag(&self) -> Result<u32, TraceParseError> {
        let v = self.str("tag");
        v.parse().map_err(|_| self.err(format!("bad tag `{v}`")))
    }

    fn operand(&self) -> Result<Operand, TraceParseError> {
        match self.str("op") {
            "flt" => Ok(Operand::Flt),
            "in" => Ok(Operand::In),
            "out" => Ok(Operand::Out),
            o => Err(self.err(format!("unknown operand `{o}`"))),
        }
    }

    fn region(&self) -> Result<MainRegion, TraceParseError> {
        let v = self.str("main");
        let parts: Vec<&str> = v.split(',').collect();
        if parts.len() != 4 {
            return Err(self.err(format!("region `{v}` needs base,rows,row_bytes,stride")));
        }
        let mut n = [0usize; 4];
        for (slot, p) in n.iter_mut().zip(&parts) {
            let x: u64 = p.parse().map_err(|_| self.err(format!("bad region field `{p}`")))?;
            if x > 1 << 40 {
                return Err(self.err("region field too large".into()));
            }
            *slot = x as usize;
        }
        Ok(MainRegion {
            base: n[0],
            rows: n[1],
            row_bytes: n[2],
            stride: n[3],
        })
    }
}

fn parse_op(line: usize, toks: &[&str]) -> Result<TraceOp, TraceParseError> {
    let (head, rest) = toks.split_first().expect("non-empty line");
    let f = |keys: &[&str]| Fields::new(line, rest, keys);
    Ok(match *head {
        "dma_get" | "dma_put" => {
            let f = f(&["op", "main", "ldm", "tag"])?;
            let (operand, main, ldm, tag) = (f.operand()?, f.region()?, f.num("ldm")?, f.tag()?);
            if *head == "dma_get" {
                TraceOp::DmaGet { operand, main, ldm, tag }
            } else {
                TraceOp::DmaPut { operand, main, ldm, tag }
            }
        }
        "dma_wait" => TraceOp::DmaWait { tag: f(&["tag"])?.tag()? },
        "convert" => {
            let f = f(&["src", "dst", "count", "dir", "order"])?;
            let dir = match f.str("dir") {
                "f32_f64" => ConvertDir::F32ToF64,
                "f64_f32" => ConvertDir::F64ToF32,
                d => return Err(f.err(format!("unknown dir `{d}`"))),
            };
            let order = match f.str("order") {
                "fwd" => ConvertOrder::Forward,
                "rev" => ConvertOrder::Reverse,
                o => return Err(f.err(format!("unknown order `{o}`"))),
            };
            TraceOp::Convert {
                src: f.num("src")?,
                dst: f.num("dst")?,
                count: f.num("count")?,
                dir,
                order,
            }
        }
        "zero" => {
            let f = f(&["ldm", "bytes"])?;
            TraceOp::ZeroFill {
                ldm: f.num("ldm")?,
                bytes: f.num("bytes")?,
            }
        }
        "kernel" => {
            let f = f(&["flavor", "reordered", "flt", "in", "out", "k", "n", "c"])?;
            let flavor = parse_flavor(f.str("flavor"))
                .ok_or_else(|| f.err(format!("unknown flavor `{}`", f.str("flavor"))))?;
            let reordered = match f.str("reordered") {
                "0" => false,
                "1" => true,
                r => return Err(f.err(format!("reordered must be 0 or 1, got `{r}`"))),
            };
            TraceOp::Microkernel {
                flavor,
                reordered,
                flt: f.num("flt")?,
                inp: f.num("in")?,
                out: f.num("out")?,
                k: f.num("k")?,
                n: f.num("n")?,
                c: f.num("c")?,
            }
        }
        "bcast_row" | "bcast_col" => {
            let f = f(&["ldm", "bytes"])?;
            let (ldm, bytes) = (f.num("ldm")?, f.num("bytes")?);
            if *head == "bcast_row" {
                TraceOp::BcastRow { ldm, bytes }
            } else {
                TraceOp::BcastCol { ldm, bytes }
            }
        }
        "recv" => {
            let f = f(&["axis", "ldm", "bytes"])?;
            let axis = match f.str("axis") {
                "row" => CommAxis::Row,
                "col" => CommAxis::Col,
                a => return Err(f.err(format!("unknown axis `{a}`"))),
            };
            TraceOp::Recv {
                axis,
                ldm: f.num("ldm")?,
                bytes: f.num("bytes")?,
            }
        }
        "barrier" => TraceOp::LocalBarrier {
            tb_id: f(&["tb"])?.num("tb")?,
        },
        other => {
            return Err(TraceParseError {
                line,
                msg: format!("unknown op `{other}`"),
            })
        }
    })
}

/// Parses the text form into `(element, program)` sections in file order.
/// A repeated `cpe` header appends to the earlier section.
pub fn parse_trace(text: &str) -> Result<Vec<(CpeId, Program)>, TraceParseError> {
    let mut sections: Vec<(CpeId, Program)> = Vec::new();
    let mut current: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks[0] == "cpe" {
            if toks.len() != 3 {
                return Err(TraceParseError {
                    line,
                    msg: "expected `cpe <row> <col>`".into(),
                });
            }
            let coord = |s: &str| {
                s.parse::<u16>().map(usize::from).map_err(|_| TraceParseError {
                    line,
                    msg: format!("bad coordinate `{s}`"),
                })
            };
            let id = CpeId::new(coord(toks[1])?, coord(toks[2])?);
            current = Some(match sections.iter().position(|(c, _)| *c == id) {
                Some(p) => p,
                None => {
                    sections.push((id, Vec::new()));
                    sections.len() - 1
                }
            });
            continue;
        }
        let slot = current.ok_or_else(|| TraceParseError {
            line,
            msg: "operation before any `cpe` header".into(),
        })?;
        let op = parse_op(line, &toks)?;
        sections[slot].1.push(op);
    }
    Ok(sections)
}
