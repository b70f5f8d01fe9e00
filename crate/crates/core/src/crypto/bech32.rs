//! Bech32 address encoding (BIP-173 checksum variant).
//!
//! Payload bytes are regrouped into 5-bit values, checksummed and rendered
//! with the standard 32-character alphabet. The 90-character overall length
//! cap of BIP-173 is not enforced: ledger addresses carry 32-byte digests,
//! which exceed it by design in the address scheme this follows.

use thiserror::Error;

const CHARSET: &[u8; 32] = b"qpzry9x8gf2tvdw0s3jn54khce6mua7l";
const GENERATOR: [u32; 5] = [0x3b6a_57b2, 0x2650_8e6d, 0x1ea1_19fa, 0x3d42_33dd, 0x2a14_62b3];
const SEPARATOR: char = '1';
const CHECKSUM_LEN: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Bech32Error {
    #[error("hrp must be 1..=83 characters, got {0}")]
    HrpLength(usize),
    #[error("invalid hrp character {0:?}")]
    HrpChar(char),
    #[error("missing separator '1'")]
    MissingSeparator,
    #[error("mixed-case strings are not allowed")]
    MixedCase,
    #[error("invalid data character {0:?}")]
    DataChar(char),
    #[error("data part shorter than the checksum")]
    DataTooShort,
    #[error("checksum verification failed")]
    Checksum,
    #[error("padding bits are invalid for a byte payload")]
    Padding,
}

/// A checksummed address: the human-readable part plus the encoded data part
/// (payload and checksum characters).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bech32Address {
    pub hrp: String,
    pub data: String,
}

impl std::fmt::Display for Bech32Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}{}", self.hrp, SEPARATOR, self.data)
    }
}

fn polymod(values: &[u8]) -> u32 {
    let mut chk: u32 = 1;
    for &v in values {
        let b = chk >> 25;
        chk = ((chk & 0x01ff_ffff) << 5) ^ u32::from(v);
        for (i, g) in GENERATOR.iter().enumerate() {
            if (b >> i) & 1 == 1 {
                chk ^= g;
            }
        }
    }
    chk
}

fn hrp_expand(hrp: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(hrp.len() * 2 + 1);
    out.extend(hrp.bytes().map(|b| b >> 5));
    out.push(0);
    out.extend(hrp.bytes().map(|b| b & 31));
    out
}

fn validate_hrp(hrp: &str) -> Result<(), Bech32Error> {
    if hrp.is_empty() || hrp.len() > 83 {
        return Err(Bech32Error::HrpLength(hrp.len()));
    }
    for c in hrp.chars() {
        if !(33..=126).contains(&(c as u32)) || c.is_ascii_uppercase() {
            return Err(Bech32Error::HrpChar(c));
        }
    }
    Ok(())
}

fn create_checksum(hrp: &str, data: &[u8]) -> [u8; CHECKSUM_LEN] {
    let mut values = hrp_expand(hrp);
    values.extend_from_slice(data);
    values.extend_from_slice(&[0; CHECKSUM_LEN]);
    let pm = polymod(&values) ^ 1;
    let mut out = [0u8; CHECKSUM_LEN];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = ((pm >> (5 * (5 - i))) & 31) as u8;
    }
    out
}

fn verify_checksum(hrp: &str, data: &[u8]) -> bool {
    let mut values = hrp_expand(hrp);
    values.extend_from_slice(data);
    polymod(&values) == 1
}

/// General power-of-two base conversion used for the 8-bit/5-bit regrouping.
fn convert_bits(data: &[u8], from: u32, to: u32, pad: bool) -> Result<Vec<u8>, Bech32Error> {
    let mut acc: u32 = 0;
    let mut bits: u32 = 0;
    let mut out = Vec::new();
    let maxv: u32 = (1 << to) - 1;
    for &value in data {
        if u32::from(value) >> from != 0 {
            return Err(Bech32Error::Padding);
        }
        acc = (acc << from) | u32::from(value);
        bits += from;
        while bits >= to {
            bits -= to;
            out.push(((acc >> bits) & maxv) as u8);
        }
    }
    if pad {
        if bits > 0 {
            out.push(((acc << (to - bits)) & maxv) as u8);
        }
    } else if bits >= from || ((acc << (to - bits)) & maxv) != 0 {
        return Err(Bech32Error::Padding);
    }
    Ok(out)
}

/// Encodes a byte payload under the given lowercase hrp.
pub fn bech32_encode(hrp: &str, payload: &[u8]) -> Result<Bech32Address, Bech32Error> {
    validate_hrp(hrp)?;
    let data5 = convert_bits(payload, 8, 5, true)?;
    encode_fes(hrp, &data5)
}

/// Encodes already-regrouped 5-bit values. Used by the string-vector tests
/// where the data part is not byte-aligned.
pub fn encode_fes(hrp: &str, data5: &[u8]) -> Result<Bech32Address, Bech32Error> {
    validate_hrp(hrp)?;
    let checksum = create_checksum(hrp, data5);
    let mut data = String::with_capacity(data5.len() + CHECKSUM_LEN);
    for &v in data5.iter().chain(checksum.iter()) {
        data.push(CHARSET[v as usize] as char);
    }
    Ok(Bech32Address {
        hrp: hrp.to_string(),
        data,
    })
}

/// Decodes a bech32 string down to its checksum-verified 5-bit values.
pub fn decode_fes(s: &str) -> Result<(String, Vec<u8>), Bech32Error> {
    let has_lower = s.chars().any(|c| c.is_ascii_lowercase());
    let has_upper = s.chars().any(|c| c.is_ascii_uppercase());
    if has_lower && has_upper {
        return Err(Bech32Error::MixedCase);
    }
    let s = s.to_ascii_lowercase();
    let sep = s.rfind(SEPARATOR).ok_or(Bech32Error::MissingSeparator)?;
    let (hrp, rest) = (&s[..sep], &s[sep + 1..]);
    validate_hrp(hrp)?;
    if rest.len() < CHECKSUM_LEN {
        return Err(Bech32Error::DataTooShort);
    }
    let mut data = Vec::with_capacity(rest.len());
    for c in rest.chars() {
        let idx = CHARSET
            .iter()
            .position(|&b| b as char == c)
            .ok_or(Bech32Error::DataChar(c))?;
        data.push(idx as u8);
    }
    if !verify_checksum(hrp, &data) {
        return Err(Bech32Error::Checksum);
    }
    data.truncate(data.len() - CHECKSUM_LEN);
    Ok((hrp.to_string(), data))
}

/// Decodes a bech32 string to its hrp and byte payload, verifying the
/// checksum and the 5-to-8 bit regrouping.
pub fn bech32_decode(s: &str) -> Result<(String, Vec<u8>), Bech32Error> {
    let (hrp, data5) = decode_fes(s)?;
    let payload = convert_bits(&data5, 5, 8, false)?;
    Ok((hrp, payload))
}
