//! Binary snapshots of [`MixtureState`].
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      [u8; 4]  = b"BMSR"
//! version    u16      = 1
//! count      u32      number of per-λ statistics
//! steps      u64
//! flags      u8       bit 0: alarmed, bit 1: saturated
//! alarmed_at u64      0 when not alarmed
//! mixture    f64
//! r          [f64; count]
//! ```

use super::{DetectorError, MixtureState};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"BMSR";
pub const SNAPSHOT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 1 + 8 + 8;

pub fn serialize_state(state: &MixtureState) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * state.r.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.r.len() as u32).to_le_bytes());
    out.extend_from_slice(&state.n.to_le_bytes());
    let flags = u8::from(state.alarmed_at.is_some()) | (u8::from(state.saturated) << 1);
    out.push(flags);
    out.extend_from_slice(&state.alarmed_at.unwrap_or(0).to_le_bytes());
    out.extend_from_slice(&state.mixture.to_bits().to_le_bytes());
    for r in &state.r {
        out.extend_from_slice(&r.to_bits().to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DetectorError> {
        if self.bytes.len() < N {
            return Err(DetectorError::Decode("truncated snapshot".into()));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64, DetectorError> {
        Ok(u64::from_le_bytes(self.take::<8>()?))
    }

    fn f64(&mut self) -> Result<f64, DetectorError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

pub fn deserialize_state(bytes: &[u8]) -> Result<MixtureState, DetectorError> {
    let mut rd = Reader { bytes };
    if rd.take::<4>()? != SNAPSHOT_MAGIC {
        return Err(DetectorError::Decode("bad magic".into()));
    }
    let version = u16::from_le_bytes(rd.take::<2>()?);
    if version != SNAPSHOT_VERSION {
        return Err(DetectorError::Decode(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(rd.take::<4>()?) as usize;
    let n = rd.u64()?;
    let [flags] = rd.take::<1>()?;
    if flags & !0b11 != 0 {
        return Err(DetectorError::Decode(format!("unknown flags {flags:#04x}")));
    }
    let alarm = rd.u64()?;
    let mixture = rd.f64()?;
    if rd.bytes.len() != 8 * count {
        return Err(DetectorError::Decode(format!(
            "expected {} payload bytes, found {}",
            8 * count,
            rd.bytes.len()
        )));
    }
    let r = (0..count).map(|_| rd.f64()).collect::<Result<Vec<_>, _>>()?;
    let alarmed_at = (flags & 1 != 0).then_some(alarm);
    if alarmed_at.is_some_and(|t| t == 0 || t > n) {
        return Err(DetectorError::Decode("alarm time outside processed steps".into()));
    }
    if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(mixture.is_finite() && mixture >= 0.0) {
        return Err(DetectorError::Decode("statistics must be finite and nonnegative".into()));
    }
    Ok(MixtureState {
        n,
        r,
        mixture,
        alarmed_at,
        saturated: flags & 2 != 0,
    })
}
