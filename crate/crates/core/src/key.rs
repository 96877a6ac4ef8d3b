//! Order-preserving composite key encoding.
//!
//! Byte-wise comparison of encoded keys matches the lexicographic order of
//! the component tuples, so range scans over encoded keys behave like scans
//! over the tuples.

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyBuf(Vec<u8>);

impl KeyBuf {
    pub fn new() -> Self {
        KeyBuf(Vec::with_capacity(16))
    }

    pub fn u8(mut self, v: u8) -> Self {
        self.0.push(v);
        self
    }

    pub fn u32(mut self, v: u32) -> Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(mut self, v: i64) -> Self {
        self.0
            .extend_from_slice(&((v as u64) ^ (1 << 63)).to_be_bytes());
        self
    }

    /// Strings are NUL terminated, so they must not contain NUL.
    pub fn str(mut self, v: &str) -> Self {
        debug_assert!(!v.as_bytes().contains(&0));
        self.0.extend_from_slice(v.as_bytes());
        self.0.push(0);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub fn key_u64(v: u64) -> Vec<u8> {
    KeyBuf::new().u64(v).finish()
}

pub fn key_u32(v: u32) -> Vec<u8> {
    KeyBuf::new().u32(v).finish()
}

pub fn decode_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_i64(bytes: &[u8], at: usize) -> i64 {
    (decode_u64(bytes, at) ^ (1 << 63)) as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tuple_order_is_byte_order(a in any::<(u32, i64, String)>(), b in any::<(u32, i64, String)>()) {
            prop_assume!(!a.2.contains('\0') && !b.2.contains('\0'));
            let ka = KeyBuf::new().u32(a.0).i64(a.1).str(&a.2).finish();
            let kb = KeyBuf::new().u32(b.0).i64(b.1).str(&b.2).finish();
            let ta = (a.0, a.1, a.2.as_bytes());
            let tb = (b.0, b.1, b.2.as_bytes());
            prop_assert_eq!(ka.cmp(&kb), ta.cmp(&tb));
        }

        #[test]
        fn integers_round_trip(v in any::<i64>(), w in any::<u32>()) {
            let k = KeyBuf::new().u32(w).i64(v).finish();
            prop_assert_eq!(decode_u32(&k, 0), w);
            prop_assert_eq!(decode_i64(&k, 4), v);
        }
    }
}
