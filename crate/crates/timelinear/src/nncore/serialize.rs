//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "TLINMDL1"
//! config  u32 byte length + UTF-8 text (key=value lines)
//! then, per parameter, in the model's canonical order:
//!   name  u32 byte length + UTF-8 (e.g. "timester.hidden1.weight")
//!   rank  u32
//!   dims  rank × u32
//!   data  numel × f64 (IEEE-754 bits, so round trips are bit-exact)
//! ```

use std::io::{Read, Write};

use super::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TLINMDL1";

const MAX_NAME_BYTES: u32 = 4096;
const MAX_CONFIG_BYTES: u32 = 1 << 20;
const MAX_RANK: u32 = 8;
const MAX_NUMEL: u64 = 1 << 30;

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| format_err(format!("unexpected end of file while reading {what}: {e}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string(r: &mut impl Read, limit: u32, what: &str) -> Result<String> {
    let len = read_u32(r, what)?;
    if len > limit {
        return Err(format_err(format!("{what} length {len} exceeds limit {limit}")));
    }
    let mut buf = vec![0u8; len as usize];
    read_exact(r, &mut buf, what)?;
    String::from_utf8(buf).map_err(|_| format_err(format!("{what} is not valid UTF-8")))
}

/// Write a complete model file: magic, config text, named parameters.
pub fn write_model<W: Write>(
    w: &mut W,
    config: &str,
    params: &[(String, &Tensor)],
) -> Result<()> {
    w.write_all(MAGIC)?;
    write_string(w, config)?;
    for (name, tensor) in params {
        write_string(w, name)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a complete model file back: the config text and the parameters in
/// file order.
pub fn read_model<R: Read>(r: &mut R) -> Result<(String, Vec<(String, Tensor)>)> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(format_err(format!(
            "bad magic {:?}, not a model file",
            String::from_utf8_lossy(&magic)
        )));
    }
    let config = read_string(r, MAX_CONFIG_BYTES, "config")?;
    let mut params = Vec::new();
    loop {
        // A clean EOF before the next name ends the file.
        let mut len_bytes = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            let n = r
                .read(&mut len_bytes[filled..])
                .map_err(|e| format_err(format!("read error: {e}")))?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled == 0 {
            break;
        }
        if filled < 4 {
            return Err(format_err("truncated parameter name length"));
        }
        let name_len = u32::from_le_bytes(len_bytes);
        if name_len > MAX_NAME_BYTES {
            return Err(format_err(format!("parameter name length {name_len} too large")));
        }
        let mut name_buf = vec![0u8; name_len as usize];
        read_exact(r, &mut name_buf, "parameter name")?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| format_err("parameter name is not valid UTF-8"))?;
        let rank = read_u32(r, "parameter rank")?;
        if rank > MAX_RANK {
            return Err(format_err(format!("parameter {name:?}: rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = read_u32(r, "parameter dimension")? as u64;
            numel = numel.saturating_mul(d);
            shape.push(d as usize);
        }
        if numel > MAX_NUMEL {
            return Err(format_err(format!("parameter {name:?}: {numel} elements too large")));
        }
        let mut data = Vec::with_capacity(numel as usize);
        let mut b = [0u8; 8];
        for _ in 0..numel {
            read_exact(r, &mut b, &format!("values of parameter {name:?}"))?;
            data.push(f64::from_le_bytes(b));
        }
        params.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok((config, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(config: &str, params: Vec<(String, Tensor)>) -> (String, Vec<(String, Tensor)>) {
        let mut buf = Vec::new();
        let refs: Vec<(String, &Tensor)> =
            params.iter().map(|(n, t)| (n.clone(), t)).collect();
        write_model(&mut buf, config, &refs).unwrap();
        read_model(&mut buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t1 = Tensor::from_vec(&[2, 3], vec![1.5, -2.25, 1e-300, f64::MIN_POSITIVE, 0.1, 3.0])
            .unwrap();
        let t2 = Tensor::from_vec(&[3], vec![-0.0, 1.0 / 3.0, f64::MAX]).unwrap();
        let (config, params) = roundtrip(
            "alpha=1\nbeta=0.3\n",
            vec![("a.weight".into(), t1.clone()), ("a.bias".into(), t2.clone())],
        );
        assert_eq!(config, "alpha=1\nbeta=0.3\n");
        assert_eq!(params.len(), 2);
        assert_eq!(params[0].0, "a.weight");
        assert_eq!(params[0].1.shape(), &[2, 3]);
        for (orig, read) in [(&t1, &params[0].1), (&t2, &params[1].1)] {
            for (a, b) in orig.data().iter().zip(read.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn file_starts_with_magic() {
        let mut buf = Vec::new();
        write_model(&mut buf, "", &[]).unwrap();
        assert_eq!(&buf[0..8], MAGIC);
    }

    #[test]
    fn bad_magic_and_truncation_are_rejected() {
        let mut buf = Vec::new();
        let t = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        write_model(&mut buf, "k=v", &[("p".into(), &t)]).unwrap();

        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(
            read_model(&mut wrong.as_slice()),
            Err(Error::ModelFormat(_))
        ));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            read_model(&mut &truncated[..]),
            Err(Error::ModelFormat(_))
        ));
    }

    #[test]
    fn identical_inputs_produce_identical_bytes() {
        let t = Tensor::from_vec(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_model(&mut a, "c=1", &[("w".into(), &t)]).unwrap();
        write_model(&mut b, "c=1", &[("w".into(), &t)]).unwrap();
        assert_eq!(a, b);
    }
}
