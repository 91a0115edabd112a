//! Raw frame parsing: Ethernet / IPv4 / IPv6 / TCP with options.

use std::net::IpAddr;

use siblink_core::RawTcpOption;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_VLAN: u16 = 0x8100;

/// A parsed TCP segment of interest to the prober.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegment {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub syn: bool,
    pub ack: bool,
    pub rst: bool,
    pub fin: bool,
    /// TSval of the timestamps option, when present.
    pub tsval: Option<u32>,
    pub options: Vec<RawTcpOption>,
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Parses an Ethernet frame down to a TCP segment. Returns `None` for
/// anything that is not well-formed TCP over IPv4/IPv6.
pub fn parse_ethernet(frame: &[u8]) -> Option<TcpSegment> {
    if frame.len() < 14 {
        return None;
    }
    let mut ethertype = be16(&frame[12..14]);
    let mut offset = 14;
    // single VLAN tag
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < 18 {
            return None;
        }
        ethertype = be16(&frame[16..18]);
        offset = 18;
    }
    match ethertype {
        ETHERTYPE_IPV4 => parse_ipv4(&frame[offset..]),
        ETHERTYPE_IPV6 => parse_ipv6(&frame[offset..]),
        _ => None,
    }
}

fn parse_ipv4(packet: &[u8]) -> Option<TcpSegment> {
    if packet.len() < 20 || packet[0] >> 4 != 4 {
        return None;
    }
    let ihl = ((packet[0] & 0x0f) as usize) * 4;
    if ihl < 20 || packet.len() < ihl {
        return None;
    }
    if packet[9] != 6 {
        return None;
    }
    // reject non-first fragments
    let frag = be16(&packet[6..8]);
    if frag & 0x1fff != 0 {
        return None;
    }
    let total_len = be16(&packet[2..4]) as usize;
    let end = total_len.clamp(ihl, packet.len());
    let src = IpAddr::from([packet[12], packet[13], packet[14], packet[15]]);
    let dst = IpAddr::from([packet[16], packet[17], packet[18], packet[19]]);
    parse_tcp(&packet[ihl..end], src, dst)
}

fn parse_ipv6(packet: &[u8]) -> Option<TcpSegment> {
    if packet.len() < 40 || packet[0] >> 4 != 6 {
        return None;
    }
    let src_bytes: [u8; 16] = packet[8..24].try_into().ok()?;
    let dst_bytes: [u8; 16] = packet[24..40].try_into().ok()?;
    let src = IpAddr::from(src_bytes);
    let dst = IpAddr::from(dst_bytes);
    let mut next = packet[6];
    let mut offset = 40usize;
    // walk the common extension header chain
    loop {
        match next {
            6 => return parse_tcp(&packet[offset..], src, dst),
            0 | 43 | 60 => {
                if packet.len() < offset + 8 {
                    return None;
                }
                next = packet[offset];
                offset += 8 * (packet[offset + 1] as usize + 1);
                if packet.len() < offset {
                    return None;
                }
            }
            44 => {
                if packet.len() < offset + 8 {
                    return None;
                }
                // only the first fragment still holds the TCP header
                let frag_offset = be16(&packet[offset + 2..offset + 4]) >> 3;
                if frag_offset != 0 {
                    return None;
                }
                next = packet[offset];
                offset += 8;
            }
            _ => return None,
        }
    }
}

fn parse_tcp(segment: &[u8], src: IpAddr, dst: IpAddr) -> Option<TcpSegment> {
    if segment.len() < 20 {
        return None;
    }
    let data_offset = ((segment[12] >> 4) as usize) * 4;
    if data_offset < 20 || segment.len() < data_offset {
        return None;
    }
    let flags = segment[13];
    let options = parse_options(&segment[20..data_offset]);
    let tsval = options
        .iter()
        .find(|o| o.kind == 8 && o.data.len() >= 4)
        .map(|o| be32(&o.data[0..4]));
    Some(TcpSegment {
        src,
        dst,
        src_port: be16(&segment[0..2]),
        dst_port: be16(&segment[2..4]),
        syn: flags & 0x02 != 0,
        ack: flags & 0x10 != 0,
        rst: flags & 0x04 != 0,
        fin: flags & 0x01 != 0,
        tsval,
        options,
    })
}

/// Walks the TCP options region in wire order. Stops at end-of-list or at
/// the first malformed length.
pub fn parse_options(region: &[u8]) -> Vec<RawTcpOption> {
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < region.len() {
        let kind = region[i];
        match kind {
            0 => {
                out.push(RawTcpOption::new(0, vec![]));
                break;
            }
            1 => {
                out.push(RawTcpOption::new(1, vec![]));
                i += 1;
            }
            _ => {
                if i + 1 >= region.len() {
                    break;
                }
                let len = region[i + 1] as usize;
                if len < 2 || i + len > region.len() {
                    break;
                }
                out.push(RawTcpOption::new(kind, region[i + 2..i + len].to_vec()));
                i += len;
            }
        }
    }
    out
}
