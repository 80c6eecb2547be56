//! Wire format of the experimental protocol: Ethernet + CDP header + payload.
//!
//! Every frame handled by the engine is an Ethernet frame carrying a fixed
//! 18-byte custom data-plane (CDP) header followed by the payload. This
//! module owns the bidirectional mapping between raw frames and
//! [`ParsedPacket`] values. No I/O happens here; parsing and deparsing are
//! pure functions.
//!
//! # Frame layout
//!
//! All multi-byte integers are **big-endian**.
//!
//! ```text
//! offset  size  field
//! ------  ----  -----------------------------------------------------------
//!      0     6  dst_mac
//!      6     6  src_mac
//!     12     2  ethertype          (must be 0x88B5, local-experimental)
//!     14     1  version            (must be 1)
//!     15     1  flags              bit0 = tag (compression requested)
//!                                  bit1 = compressed (payload compressed
//!                                         on the wire)
//!                                  bits 2-7 reserved, must be zero
//!     16     4  src_addr
//!     20     4  dst_addr
//!     24     4  flow_label
//!     28     2  payload_length     bytes of payload as carried on the wire
//!     30     2  original_length    pre-compression payload length
//!     32     -  payload            exactly payload_length bytes
//! ```
//!
//! Header invariants:
//! - `compressed == 0` implies `payload_length == original_length`.
//! - `compressed == 1` implies `payload_length < original_length`
//!   (a compressed payload never expands; see the codec fallback rule).

use std::time::Instant;

use thiserror::Error;

/// Ethertype carried by every frame of this protocol (local experimental range).
pub const CDP_ETHERTYPE: u16 = 0x88B5;
/// Header version understood by this engine.
pub const CDP_VERSION: u8 = 1;

/// Bytes of Ethernet header on the wire.
pub const ETHERNET_LEN: usize = 14;
/// Bytes of CDP header on the wire.
pub const CDP_HEADER_LEN: usize = 18;
/// Smallest valid frame: both headers, empty payload.
pub const MIN_FRAME_LEN: usize = ETHERNET_LEN + CDP_HEADER_LEN;

const OFF_DST_MAC: usize = 0;
const OFF_SRC_MAC: usize = 6;
const OFF_ETHERTYPE: usize = 12;
const OFF_VERSION: usize = 14;
const OFF_FLAGS: usize = 15;
const OFF_SRC_ADDR: usize = 16;
const OFF_DST_ADDR: usize = 20;
const OFF_FLOW_LABEL: usize = 24;
const OFF_PAYLOAD_LEN: usize = 28;
const OFF_ORIGINAL_LEN: usize = 30;

const FLAG_TAG: u8 = 0b0000_0001;
const FLAG_COMPRESSED: u8 = 0b0000_0010;
const FLAG_RESERVED_MASK: u8 = !(FLAG_TAG | FLAG_COMPRESSED);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("frame too short: {0} bytes, minimum is {MIN_FRAME_LEN}")]
    TooShort(usize),
    #[error("unexpected ethertype {0:#06x}, expected {CDP_ETHERTYPE:#06x}")]
    BadEthertype(u16),
    #[error("unsupported header version {0}, expected {CDP_VERSION}")]
    BadVersion(u8),
    #[error("reserved flag bits set in {0:#04x}")]
    ReservedBitsSet(u8),
    #[error("header declares {declared} payload bytes but frame carries {carried}")]
    LengthMismatch { declared: u16, carried: usize },
    #[error(
        "length fields inconsistent with compressed flag: \
         compressed={compressed}, payload_length={payload_length}, \
         original_length={original_length}"
    )]
    InconsistentLengths {
        compressed: bool,
        payload_length: u16,
        original_length: u16,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeparseError {
    #[error("header invariant violated: {0}")]
    InvariantViolation(&'static str),
}

/// Layer-2 header. The destination MAC is the pipeline's forwarding key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EthernetHeader {
    pub dst_mac: [u8; 6],
    pub src_mac: [u8; 6],
    pub ethertype: u16,
}

/// The two defined CDP flag bits. Reserved bits are unrepresentable here;
/// they are rejected at parse time and always serialized as zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CdpFlags {
    /// Compression requested by the sender.
    pub tag: bool,
    /// Payload is compressed as carried on the wire.
    pub compressed: bool,
}

impl CdpFlags {
    pub fn from_byte(b: u8) -> Result<Self, ParseError> {
        if b & FLAG_RESERVED_MASK != 0 {
            return Err(ParseError::ReservedBitsSet(b));
        }
        Ok(CdpFlags {
            tag: b & FLAG_TAG != 0,
            compressed: b & FLAG_COMPRESSED != 0,
        })
    }

    pub fn to_byte(self) -> u8 {
        let mut b = 0;
        if self.tag {
            b |= FLAG_TAG;
        }
        if self.compressed {
            b |= FLAG_COMPRESSED;
        }
        b
    }
}

/// The 18-byte custom data-plane header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CdpHeader {
    pub version: u8,
    pub flags: CdpFlags,
    pub src_addr: u32,
    pub dst_addr: u32,
    pub flow_label: u32,
    /// Payload bytes as carried on the wire.
    pub payload_length: u16,
    /// Payload bytes before compression. Equal to `payload_length` whenever
    /// the compressed flag is clear; strictly greater when it is set.
    pub original_length: u16,
}

impl CdpHeader {
    fn check_invariants(&self) -> Result<(), &'static str> {
        if self.version != CDP_VERSION {
            return Err("version must be 1");
        }
        if self.flags.compressed {
            if self.payload_length >= self.original_length {
                return Err("compressed payload must be shorter than original");
            }
        } else if self.payload_length != self.original_length {
            return Err("uncompressed payload_length must equal original_length");
        }
        Ok(())
    }
}

/// Ingress metadata attached to a packet; not part of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketMeta {
    pub ingress_port: u16,
    pub arrival_time: Instant,
}

impl PacketMeta {
    pub fn new(ingress_port: u16, arrival_time: Instant) -> Self {
        PacketMeta {
            ingress_port,
            arrival_time,
        }
    }
}

/// One decoded frame: headers, payload, and ingress metadata. The unit that
/// flows through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPacket {
    pub eth: EthernetHeader,
    pub cdp: CdpHeader,
    pub payload: Vec<u8>,
    pub meta: PacketMeta,
}

impl ParsedPacket {
    /// Builds an uncompressed packet; length fields are derived from the payload.
    pub fn new(
        eth: EthernetHeader,
        src_addr: u32,
        dst_addr: u32,
        flow_label: u32,
        tag: bool,
        payload: Vec<u8>,
        meta: PacketMeta,
    ) -> Self {
        let len = payload.len() as u16;
        ParsedPacket {
            eth,
            cdp: CdpHeader {
                version: CDP_VERSION,
                flags: CdpFlags {
                    tag,
                    compressed: false,
                },
                src_addr,
                dst_addr,
                flow_label,
                payload_length: len,
                original_length: len,
            },
            payload,
            meta,
        }
    }

    /// Total frame length this packet serializes to.
    pub fn frame_len(&self) -> usize {
        MIN_FRAME_LEN + self.payload.len()
    }
}

/// Decodes one frame. Rejects anything that fails a layout precondition or a
/// header invariant; never yields a partially filled packet.
///
/// The frame must be exactly `32 + payload_length` bytes; trailing bytes are
/// a [`ParseError::LengthMismatch`].
pub fn parse(frame: &[u8], meta: PacketMeta) -> Result<ParsedPacket, ParseError> {
    if frame.len() < MIN_FRAME_LEN {
        return Err(ParseError::TooShort(frame.len()));
    }

    let ethertype = u16::from_be_bytes([frame[OFF_ETHERTYPE], frame[OFF_ETHERTYPE + 1]]);
    if ethertype != CDP_ETHERTYPE {
        return Err(ParseError::BadEthertype(ethertype));
    }
    let version = frame[OFF_VERSION];
    if version != CDP_VERSION {
        return Err(ParseError::BadVersion(version));
    }
    let flags = CdpFlags::from_byte(frame[OFF_FLAGS])?;

    let be32 = |off: usize| u32::from_be_bytes([frame[off], frame[off + 1], frame[off + 2], frame[off + 3]]);
    let payload_length = u16::from_be_bytes([frame[OFF_PAYLOAD_LEN], frame[OFF_PAYLOAD_LEN + 1]]);
    let original_length = u16::from_be_bytes([frame[OFF_ORIGINAL_LEN], frame[OFF_ORIGINAL_LEN + 1]]);

    let carried = frame.len() - MIN_FRAME_LEN;
    if carried != payload_length as usize {
        return Err(ParseError::LengthMismatch {
            declared: payload_length,
            carried,
        });
    }
    let consistent = if flags.compressed {
        payload_length < original_length
    } else {
        payload_length == original_length
    };
    if !consistent {
        return Err(ParseError::InconsistentLengths {
            compressed: flags.compressed,
            payload_length,
            original_length,
        });
    }

    let mut dst_mac = [0u8; 6];
    dst_mac.copy_from_slice(&frame[OFF_DST_MAC..OFF_DST_MAC + 6]);
    let mut src_mac = [0u8; 6];
    src_mac.copy_from_slice(&frame[OFF_SRC_MAC..OFF_SRC_MAC + 6]);

    Ok(ParsedPacket {
        eth: EthernetHeader {
            dst_mac,
            src_mac,
            ethertype,
        },
        cdp: CdpHeader {
            version,
            flags,
            src_addr: be32(OFF_SRC_ADDR),
            dst_addr: be32(OFF_DST_ADDR),
            flow_label: be32(OFF_FLOW_LABEL),
            payload_length,
            original_length,
        },
        payload: frame[MIN_FRAME_LEN..].to_vec(),
        meta,
    })
}

/// Serializes a packet byte-exactly per the frame layout. Fails if the packet
/// violates a header invariant rather than emitting an inconsistent frame.
pub fn deparse(p: &ParsedPacket) -> Result<Vec<u8>, DeparseError> {
    if p.eth.ethertype != CDP_ETHERTYPE {
        return Err(DeparseError::InvariantViolation("ethertype must be 0x88B5"));
    }
    p.cdp
        .check_invariants()
        .map_err(DeparseError::InvariantViolation)?;
    if p.payload.len() != p.cdp.payload_length as usize {
        return Err(DeparseError::InvariantViolation(
            "payload length must equal cdp.payload_length",
        ));
    }

    let mut frame = vec![0u8; MIN_FRAME_LEN + p.payload.len()];
    frame[OFF_DST_MAC..OFF_DST_MAC + 6].copy_from_slice(&p.eth.dst_mac);
    frame[OFF_SRC_MAC..OFF_SRC_MAC + 6].copy_from_slice(&p.eth.src_mac);
    frame[OFF_ETHERTYPE..OFF_ETHERTYPE + 2].copy_from_slice(&p.eth.ethertype.to_be_bytes());
    frame[OFF_VERSION] = p.cdp.version;
    frame[OFF_FLAGS] = p.cdp.flags.to_byte();
    frame[OFF_SRC_ADDR..OFF_SRC_ADDR + 4].copy_from_slice(&p.cdp.src_addr.to_be_bytes());
    frame[OFF_DST_ADDR..OFF_DST_ADDR + 4].copy_from_slice(&p.cdp.dst_addr.to_be_bytes());
    frame[OFF_FLOW_LABEL..OFF_FLOW_LABEL + 4].copy_from_slice(&p.cdp.flow_label.to_be_bytes());
    frame[OFF_PAYLOAD_LEN..OFF_PAYLOAD_LEN + 2]
        .copy_from_slice(&p.cdp.payload_length.to_be_bytes());
    frame[OFF_ORIGINAL_LEN..OFF_ORIGINAL_LEN + 2]
        .copy_from_slice(&p.cdp.original_length.to_be_bytes());
    frame[MIN_FRAME_LEN..].copy_from_slice(&p.payload);
    Ok(frame)
}
