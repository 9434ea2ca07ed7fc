//! EVM bytecode normalization.
//!
//! The Solidity compiler appends a CBOR map (swarm or IPFS hash of the
//! metadata file, compiler version) followed by its length as a big-endian
//! `u16`. Two compilations of the same code differ there, so fingerprints are
//! taken over code whose metadata sections are zeroed. Deployment code of a
//! factory embeds the child's code, so sections can also sit mid-code.

use crate::error::{Error, Result};
use crate::model::Digest;

/// CBOR keys the Solidity compiler has emitted in metadata maps.
const METADATA_KEYS: [&[u8]; 5] = [b"bzzr0", b"bzzr1", b"ipfs", b"solc", b"experimental"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeKind {
    Deployment,
    Runtime,
}

/// A compiler metadata section: the CBOR map plus its 2-byte length suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BytecodeBlob {
    pub bytes: Vec<u8>,
    pub kind: CodeKind,
    pub metadata_spans: Vec<Span>,
}

impl BytecodeBlob {
    pub fn new(bytes: Vec<u8>, kind: CodeKind) -> Self {
        let metadata_spans = locate_metadata(&bytes);
        BytecodeBlob {
            bytes,
            kind,
            metadata_spans,
        }
    }

    pub fn from_hex(hex_str: &str, kind: CodeKind) -> Result<Self> {
        Ok(Self::new(decode_hex(hex_str)?, kind))
    }
}

/// Decodes a hex string with optional `0x` prefix, any case, surrounding whitespace.
pub fn decode_hex(s: &str) -> Result<Vec<u8>> {
    let s = s.trim();
    let s = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    hex::decode(s).map_err(|e| Error::validation("bytecode", format!("invalid hex: {e}")))
}

/// Reads a CBOR head (major type, argument) at `pos`. Returns `(major, arg, next_pos)`.
fn cbor_head(bytes: &[u8], pos: usize) -> Option<(u8, u64, usize)> {
    let initial = *bytes.get(pos)?;
    let major = initial >> 5;
    let info = initial & 0x1f;
    let (arg, next) = match info {
        0..=23 => (info as u64, pos + 1),
        24 => (*bytes.get(pos + 1)? as u64, pos + 2),
        25 => {
            let b = bytes.get(pos + 1..pos + 3)?;
            (u16::from_be_bytes([b[0], b[1]]) as u64, pos + 3)
        }
        26 => {
            let b = bytes.get(pos + 1..pos + 5)?;
            (u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as u64, pos + 5)
        }
        _ => return None,
    };
    Some((major, arg, next))
}

/// Parses a metadata map occupying exactly `bytes[start..end]`.
fn is_metadata_map(bytes: &[u8], start: usize, end: usize) -> bool {
    let region = &bytes[..end];
    let Some((5, entries, mut pos)) = cbor_head(region, start) else {
        return false;
    };
    if entries == 0 || entries > METADATA_KEYS.len() as u64 {
        return false;
    }
    let mut seen = [false; METADATA_KEYS.len()];
    for _ in 0..entries {
        // key: text string from the fixed set
        let Some((3, klen, kpos)) = cbor_head(region, pos) else {
            return false;
        };
        let Some(key) = region.get(kpos..kpos + klen as usize) else {
            return false;
        };
        let Some(idx) = METADATA_KEYS.iter().position(|k| *k == key) else {
            return false;
        };
        if std::mem::replace(&mut seen[idx], true) {
            return false;
        }
        pos = kpos + klen as usize;
        // value: byte string, text string, unsigned int or bool
        let Some((major, arg, vpos)) = cbor_head(region, pos) else {
            return false;
        };
        pos = match major {
            0 => vpos,
            2 | 3 => {
                let vend = vpos + arg as usize;
                if vend > end {
                    return false;
                }
                vend
            }
            // simple values false/true
            7 if arg == 20 || arg == 21 => vpos,
            _ => return false,
        };
    }
    pos == end
}

/// Finds compiler metadata sections, scanning right to left for non-overlapping matches.
///
/// Each returned span covers the CBOR map and the trailing length field.
/// Spans come back in ascending offset order.
pub fn locate_metadata(bytes: &[u8]) -> Vec<Span> {
    let mut spans = Vec::new();
    // `limit` is the exclusive end of the region still open for matches.
    let mut limit = bytes.len();
    while limit >= 2 {
        let len_pos = limit - 2;
        let map_len = u16::from_be_bytes([bytes[len_pos], bytes[len_pos + 1]]) as usize;
        if map_len > 0 && map_len <= len_pos && is_metadata_map(bytes, len_pos - map_len, len_pos) {
            let offset = len_pos - map_len;
            spans.push(Span {
                offset,
                len: map_len + 2,
            });
            limit = offset;
        } else {
            limit -= 1;
        }
    }
    spans.reverse();
    spans
}

/// Copy of `bytes` with every metadata section overwritten by zeros.
pub fn zero_metadata(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    for span in locate_metadata(bytes) {
        out[span.offset..span.end()].fill(0);
    }
    out
}

/// MD5 of the metadata-zeroed code.
pub fn fingerprint_bytecode(bytes: &[u8]) -> Digest {
    Digest::of(&zero_metadata(bytes))
}

mod op {
    pub const STOP: u8 = 0x00;
    pub const CODECOPY: u8 = 0x39;
    pub const POP: u8 = 0x50;
    pub const JUMP: u8 = 0x56;
    pub const JUMPI: u8 = 0x57;
    pub const JUMPDEST: u8 = 0x5b;
    pub const PUSH1: u8 = 0x60;
    pub const PUSH32: u8 = 0x7f;
    pub const DUP1: u8 = 0x80;
    pub const DUP16: u8 = 0x8f;
    pub const SWAP1: u8 = 0x90;
    pub const SWAP16: u8 = 0x9f;
    pub const RETURN: u8 = 0xf3;
    pub const REVERT: u8 = 0xfd;
    pub const INVALID: u8 = 0xfe;
    pub const SELFDESTRUCT: u8 = 0xff;
}

/// Abstract stack value: a constant known from an immediate push, or anything else.
type Slot = Option<u64>;

/// Stack model for one basic block. Slots below the modelled part are unknown.
#[derive(Default)]
struct BlockStack(Vec<Slot>);

impl BlockStack {
    fn peek(&self, depth: usize) -> Slot {
        self.0.len().checked_sub(depth + 1).and_then(|i| self.0[i])
    }

    fn pop(&mut self) -> Slot {
        self.0.pop().flatten()
    }

    fn push(&mut self, v: Slot) {
        self.0.push(v);
    }

    fn swap(&mut self, depth: usize) {
        let n = self.0.len();
        if n > depth {
            self.0.swap(n - 1, n - 1 - depth);
        } else {
            // The deeper slot is outside the model; the result is unknown either way.
            if let Some(top) = self.0.last_mut() {
                *top = None;
            }
        }
    }
}

/// A `CODECOPY` with constant operands waiting for the `RETURN` that hands the copy back.
#[derive(Clone, Copy)]
struct PendingCopy {
    mem_offset: u64,
    code_offset: u64,
    len: u64,
}

/// Extracts the runtime code that constructor code returns, by static pattern match.
///
/// Looks for `CODECOPY(mem, off, len)` with immediate operands followed in the
/// same basic block, with only stack shuffling in between, by
/// `RETURN(mem, len)`. The copied region must lie after that `RETURN` and
/// inside the code. The last such match wins. Returns `None` when no match
/// exists rather than guessing.
pub fn extract_runtime(deployment: &[u8]) -> Option<Vec<u8>> {
    let mut stack = BlockStack::default();
    let mut pending: Option<PendingCopy> = None;
    let mut found: Option<(usize, usize)> = None;
    let mut pc = 0usize;

    while pc < deployment.len() {
        let opcode = deployment[pc];
        let mut next = pc + 1;
        match opcode {
            op::PUSH1..=op::PUSH32 => {
                let width = (opcode - op::PUSH1 + 1) as usize;
                if pc + 1 + width > deployment.len() {
                    break;
                }
                let imm = &deployment[pc + 1..pc + 1 + width];
                let value = if imm.iter().rev().skip(8).any(|&b| b != 0) {
                    None
                } else {
                    Some(imm.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64))
                };
                stack.push(value);
                next = pc + 1 + width;
            }
            op::DUP1..=op::DUP16 => {
                let v = stack.peek((opcode - op::DUP1) as usize);
                stack.push(v);
            }
            op::SWAP1..=op::SWAP16 => stack.swap((opcode - op::SWAP1 + 1) as usize),
            op::POP => {
                stack.pop();
            }
            op::CODECOPY => {
                let mem = stack.pop();
                let off = stack.pop();
                let len = stack.pop();
                pending = match (mem, off, len) {
                    (Some(mem_offset), Some(code_offset), Some(len)) => Some(PendingCopy {
                        mem_offset,
                        code_offset,
                        len,
                    }),
                    _ => None,
                };
            }
            op::RETURN => {
                let mem = stack.pop();
                let len = stack.pop();
                if let Some(copy) = pending.take() {
                    let start = copy.code_offset as usize;
                    let end = start.checked_add(copy.len as usize);
                    if mem == Some(copy.mem_offset)
                        && len == Some(copy.len)
                        && copy.len > 0
                        && start > pc
                        && end.is_some_and(|e| e <= deployment.len())
                    {
                        found = Some((start, end.unwrap()));
                    }
                }
                stack = BlockStack::default();
            }
            op::STOP | op::JUMP | op::JUMPI | op::JUMPDEST | op::REVERT | op::INVALID
            | op::SELFDESTRUCT => {
                pending = None;
                stack = BlockStack::default();
            }
            _ => {
                // Anything else may touch memory or the stack in ways not modelled.
                pending = None;
                stack = BlockStack::default();
            }
        }
        pc = next;
    }
    found.map(|(start, end)| deployment[start..end].to_vec())
}
