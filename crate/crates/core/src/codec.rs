//! Reading and writing of CSI capture files.
//!
//! A capture is a classic PCAP container. Each CSI record travels as the
//! payload of a UDP datagram with the layout below (all little endian):
//!
//! ```text
//! offset  size  field
//!      0     2  magic            (0x1111)
//!      2     1  rssi             (i8, dB)
//!      3     1  frame_control
//!      4     6  source_mac
//!     10     2  sequence_number
//!     12     2  core_spatial     (core in bits 0..3, spatial stream in bits 3..6)
//!     14     2  chanspec
//!     16     2  chip_version
//!     18  1024  256 x (i16 re, i16 im), hardware subcarrier order
//! ```
//!
//! This is the nexmon_csi extractor layout for 80 MHz on the bcm43455c0.

use std::fmt;
use std::fs;
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of subcarriers in an 80 MHz capture.
pub const SUBCARRIERS: usize = 256;
/// Default record magic.
pub const CSI_MAGIC: u16 = 0x1111;
/// Fixed metadata bytes, magic included.
pub const HEADER_LEN: usize = 18;
pub const CSI_BYTES: usize = SUBCARRIERS * 4;
pub const PAYLOAD_LEN: usize = HEADER_LEN + CSI_BYTES;
/// Default UDP port used by the extractor.
pub const DEFAULT_PORT: u16 = 5500;

const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
const PCAP_MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_IPV4: u32 = 228;

const ETH_HEADER_LEN: usize = 14;
const IPV4_HEADER_LEN: usize = 20;
const UDP_HEADER_LEN: usize = 8;

/// One raw CSI value straight from the chip.
pub type RawSample = Complex<i16>;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed pcap global header: {0}")]
    MalformedPcapHeader(String),
    #[error("record {index} truncated: declares {declared} bytes, {available} available")]
    TruncatedRecord {
        index: usize,
        declared: usize,
        available: usize,
    },
    #[error("bad csi payload: {0}")]
    BadCsiPayload(String),
    #[error("frame violates csi invariants: {0}")]
    InvalidFrame(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Capture timestamp from the PCAP record header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp {
    pub secs: u32,
    pub micros: u32,
}

impl Timestamp {
    pub fn as_secs_f64(&self) -> f64 {
        f64::from(self.secs) + f64::from(self.micros) * 1e-6
    }
}

/// A parsed CSI record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsiFrame {
    pub magic: u16,
    pub rssi: i8,
    pub frame_control: u8,
    pub source_mac: [u8; 6],
    pub sequence_number: u16,
    pub core_spatial: u16,
    pub chanspec: u16,
    pub chip_version: u16,
    /// Hardware order, before the FFT shift.
    pub csi: Vec<RawSample>,
    #[serde(default)]
    pub timestamp: Timestamp,
}

impl CsiFrame {
    /// Frame carrying `csi` with neutral metadata.
    pub fn from_csi(csi: Vec<RawSample>) -> Self {
        CsiFrame {
            magic: CSI_MAGIC,
            rssi: 0,
            frame_control: 0x08,
            source_mac: [0; 6],
            sequence_number: 0,
            core_spatial: 0,
            chanspec: 0xe02a,
            chip_version: 0x4345,
            csi,
            timestamp: Timestamp::default(),
        }
    }

    pub fn core(&self) -> u8 {
        (self.core_spatial & 0x7) as u8
    }

    pub fn spatial_stream(&self) -> u8 {
        ((self.core_spatial >> 3) & 0x7) as u8
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.csi.len() != SUBCARRIERS {
            return Err(CodecError::InvalidFrame(format!(
                "expected {SUBCARRIERS} csi samples, got {}",
                self.csi.len()
            )));
        }
        Ok(())
    }
}

/// Decodes one UDP payload using the default magic.
pub fn decode_payload(bytes: &[u8]) -> Result<CsiFrame, CodecError> {
    decode_payload_with_magic(bytes, CSI_MAGIC)
}

pub fn decode_payload_with_magic(bytes: &[u8], magic: u16) -> Result<CsiFrame, CodecError> {
    if bytes.len() != PAYLOAD_LEN {
        return Err(CodecError::BadCsiPayload(format!(
            "payload is {} bytes, expected {PAYLOAD_LEN}",
            bytes.len()
        )));
    }
    let found = u16::from_le_bytes([bytes[0], bytes[1]]);
    if found != magic {
        return Err(CodecError::BadCsiPayload(format!(
            "magic {found:#06x} does not match {magic:#06x}"
        )));
    }
    let u16_at = |off: usize| u16::from_le_bytes([bytes[off], bytes[off + 1]]);
    let mut source_mac = [0u8; 6];
    source_mac.copy_from_slice(&bytes[4..10]);
    let csi = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| {
            Complex::new(
                i16::from_le_bytes([c[0], c[1]]),
                i16::from_le_bytes([c[2], c[3]]),
            )
        })
        .collect();
    Ok(CsiFrame {
        magic: found,
        rssi: bytes[2] as i8,
        frame_control: bytes[3],
        source_mac,
        sequence_number: u16_at(10),
        core_spatial: u16_at(12),
        chanspec: u16_at(14),
        chip_version: u16_at(16),
        csi,
        timestamp: Timestamp::default(),
    })
}

pub fn encode_payload(frame: &CsiFrame) -> Result<Vec<u8>, CodecError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(PAYLOAD_LEN);
    out.extend_from_slice(&frame.magic.to_le_bytes());
    out.push(frame.rssi as u8);
    out.push(frame.frame_control);
    out.extend_from_slice(&frame.source_mac);
    out.extend_from_slice(&frame.sequence_number.to_le_bytes());
    out.extend_from_slice(&frame.core_spatial.to_le_bytes());
    out.extend_from_slice(&frame.chanspec.to_le_bytes());
    out.extend_from_slice(&frame.chip_version.to_le_bytes());
    for s in &frame.csi {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    debug_assert_eq!(out.len(), PAYLOAD_LEN);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReadOptions {
    pub magic: u16,
    /// Only consider datagrams to or from `port` when `filter_by_port` is set.
    pub port: u16,
    pub filter_by_port: bool,
    /// Abort on the first payload that carries the magic but is malformed.
    pub strict: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            magic: CSI_MAGIC,
            port: DEFAULT_PORT,
            filter_by_port: false,
            strict: false,
        }
    }
}

/// Parsed capture file.
#[derive(Debug, Clone, Default)]
pub struct CaptureFile {
    pub frames: Vec<CsiFrame>,
    pub source_path: String,
    pub link_type: u32,
    /// Records that were not CSI traffic at all.
    pub skipped: usize,
    /// Records carrying the magic but rejected by the payload decoder.
    pub bad_payloads: usize,
}

impl fmt::Display for CaptureFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} frames, {} skipped, {} bad payloads",
            self.source_path,
            self.frames.len(),
            self.skipped,
            self.bad_payloads
        )
    }
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<CaptureFile, CodecError> {
    read_capture_with(path, &ReadOptions::default())
}

pub fn read_capture_with(
    path: impl AsRef<Path>,
    opts: &ReadOptions,
) -> Result<CaptureFile, CodecError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut capture = parse_capture(&bytes, opts)?;
    capture.source_path = path.display().to_string();
    Ok(capture)
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(a),
            Endian::Big => u32::from_be_bytes(a),
        }
    }
}

/// Parses an in-memory PCAP image.
pub fn parse_capture(bytes: &[u8], opts: &ReadOptions) -> Result<CaptureFile, CodecError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CodecError::MalformedPcapHeader(format!(
            "need {GLOBAL_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let endian = match u32::from_le_bytes(bytes[0..4].try_into().unwrap()) {
        PCAP_MAGIC => Endian::Little,
        PCAP_MAGIC_SWAPPED => Endian::Big,
        other => {
            return Err(CodecError::MalformedPcapHeader(format!(
                "unknown magic {other:#010x}"
            )))
        }
    };
    let link_type = endian.u32(&bytes[20..24]);

    let mut capture = CaptureFile {
        link_type,
        ..CaptureFile::default()
    };
    let mut pos = GLOBAL_HEADER_LEN;
    let mut index = 0;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        if rest.len() < RECORD_HEADER_LEN {
            return Err(CodecError::TruncatedRecord {
                index,
                declared: RECORD_HEADER_LEN,
                available: rest.len(),
            });
        }
        let timestamp = Timestamp {
            secs: endian.u32(&rest[0..4]),
            micros: endian.u32(&rest[4..8]),
        };
        let incl_len = endian.u32(&rest[8..12]) as usize;
        let body = &rest[RECORD_HEADER_LEN..];
        if body.len() < incl_len {
            return Err(CodecError::TruncatedRecord {
                index,
                declared: incl_len,
                available: body.len(),
            });
        }
        let packet = &body[..incl_len];
        match udp_payload(packet, link_type, opts) {
            Some(payload) if payload.len() >= 2 && payload[..2] == opts.magic.to_le_bytes() => {
                match decode_payload_with_magic(payload, opts.magic) {
                    Ok(mut frame) => {
                        frame.timestamp = timestamp;
                        capture.frames.push(frame);
                    }
                    Err(e) if opts.strict => return Err(e),
                    Err(e) => {
                        log::warn!("record {index}: {e}");
                        capture.bad_payloads += 1;
                    }
                }
            }
            _ => capture.skipped += 1,
        }
        pos += RECORD_HEADER_LEN + incl_len;
        index += 1;
    }
    Ok(capture)
}

/// Extracts the UDP payload of an IPv4 packet, bounded by the captured bytes.
fn udp_payload<'a>(packet: &'a [u8], link_type: u32, opts: &ReadOptions) -> Option<&'a [u8]> {
    let ip = match link_type {
        LINKTYPE_ETHERNET => {
            if packet.len() < ETH_HEADER_LEN {
                return None;
            }
            let mut ethertype = u16::from_be_bytes([packet[12], packet[13]]);
            let mut off = ETH_HEADER_LEN;
            // single 802.1Q tag
            if ethertype == 0x8100 {
                if packet.len() < off + 4 {
                    return None;
                }
                ethertype = u16::from_be_bytes([packet[off + 2], packet[off + 3]]);
                off += 4;
            }
            if ethertype != 0x0800 {
                return None;
            }
            &packet[off..]
        }
        LINKTYPE_RAW | LINKTYPE_IPV4 => packet,
        _ => return None,
    };
    if ip.len() < IPV4_HEADER_LEN || ip[0] >> 4 != 4 || ip[9] != 17 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < IPV4_HEADER_LEN || ip.len() < ihl + UDP_HEADER_LEN {
        return None;
    }
    let udp = &ip[ihl..];
    let src_port = u16::from_be_bytes([udp[0], udp[1]]);
    let dst_port = u16::from_be_bytes([udp[2], udp[3]]);
    if opts.filter_by_port && src_port != opts.port && dst_port != opts.port {
        return None;
    }
    let udp_len = usize::from(u16::from_be_bytes([udp[4], udp[5]]));
    if udp_len < UDP_HEADER_LEN {
        return None;
    }
    let end = udp_len.min(udp.len());
    Some(&udp[UDP_HEADER_LEN..end])
}

/// Serializes frames into a little-endian Ethernet PCAP image.
pub fn encode_capture(frames: &[CsiFrame]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + frames.len() * (PAYLOAD_LEN + 64));
    out.extend_from_slice(&PCAP_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    for frame in frames {
        let payload = encode_payload(frame)?;
        let packet = wrap_udp(&payload, DEFAULT_PORT, frame.source_mac);
        out.extend_from_slice(&frame.timestamp.secs.to_le_bytes());
        out.extend_from_slice(&frame.timestamp.micros.to_le_bytes());
        out.extend_from_slice(&(packet.len() as u32).to_le_bytes());
        out.extend_from_slice(&(packet.len() as u32).to_le_bytes());
        out.extend_from_slice(&packet);
    }
    Ok(out)
}

pub fn write_capture(frames: &[CsiFrame], path: impl AsRef<Path>) -> Result<(), CodecError> {
    let bytes = encode_capture(frames)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Ethernet + IPv4 + UDP framing the extractor uses (10.10.10.10:5500 broadcast).
pub(crate) fn wrap_udp(payload: &[u8], port: u16, src_mac: [u8; 6]) -> Vec<u8> {
    let udp_len = UDP_HEADER_LEN + payload.len();
    let ip_len = IPV4_HEADER_LEN + udp_len;
    let mut p = Vec::with_capacity(ETH_HEADER_LEN + ip_len);
    p.extend_from_slice(&[0xff; 6]);
    p.extend_from_slice(&src_mac);
    p.extend_from_slice(&0x0800u16.to_be_bytes());

    let mut ip = [0u8; IPV4_HEADER_LEN];
    ip[0] = 0x45;
    ip[2..4].copy_from_slice(&(ip_len as u16).to_be_bytes());
    ip[8] = 1;
    ip[9] = 17;
    ip[12..16].copy_from_slice(&[10, 10, 10, 10]);
    ip[16..20].copy_from_slice(&[255, 255, 255, 255]);
    let checksum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());
    p.extend_from_slice(&ip);

    p.extend_from_slice(&port.to_be_bytes());
    p.extend_from_slice(&port.to_be_bytes());
    p.extend_from_slice(&(udp_len as u16).to_be_bytes());
    p.extend_from_slice(&0u16.to_be_bytes());
    p.extend_from_slice(payload);
    p
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks_exact(2)
        .map(|w| u32::from(u16::from_be_bytes([w[0], w[1]])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
