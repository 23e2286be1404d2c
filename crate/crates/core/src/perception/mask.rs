use serde::{Deserialize, Serialize};

use super::PerceptionError;

/// Binary object mask over a frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
    /// Opaque object identifier; 0 when the backend does not know it.
    pub object_label: u32,
    pub score: f32,
}

impl SegmentMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize], object_label: 0, score: 0.0 }
    }

    pub fn from_predicate(width: u32, height: u32, object_label: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Self { width, height, bits, object_label, score: 1.0 }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height && self.bits[(v * self.width + u) as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set pixels as (u, v).
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Mean pixel coordinate of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
        for (u, v) in self.pixels() {
            su += u as f64;
            sv += v as f64;
            n += 1;
        }
        (n > 0).then(|| (su / n as f64, sv / n as f64))
    }

    /// True when any set pixel lies on the outermost row or column, so the
    /// object may extend past the frame.
    pub fn touches_border(&self) -> bool {
        self.pixels().any(|(u, v)| u == 0 || v == 0 || u + 1 == self.width || v + 1 == self.height)
    }

    /// Copy translated by whole pixels; pixels shifted off-frame are dropped.
    pub fn shifted(&self, du: i64, dv: i64) -> SegmentMask {
        let mut out = SegmentMask { bits: vec![false; self.bits.len()], ..self.clone() };
        for (u, v) in self.pixels() {
            let (nu, nv) = (u as i64 + du, v as i64 + dv);
            if nu >= 0 && nv >= 0 && nu < self.width as i64 && nv < self.height as i64 {
                out.bits[(nv as u32 * self.width + nu as u32) as usize] = true;
            }
        }
        out
    }

    pub fn to_rle(&self) -> MaskRle {
        let w = self.width as usize;
        let rows = self
            .bits
            .chunks(w.max(1))
            .map(|row| {
                let mut runs = Vec::new();
                let mut current = false;
                let mut len = 0u32;
                for &b in row {
                    if b == current {
                        len += 1;
                    } else {
                        runs.push(len);
                        current = b;
                        len = 1;
                    }
                }
                runs.push(len);
                runs
            })
            .collect();
        MaskRle { width: self.width, height: self.height, rows }
    }

    pub fn from_rle(rle: &MaskRle, object_label: u32, score: f32) -> Result<SegmentMask, PerceptionError> {
        rle.validate()?;
        let mut bits = Vec::with_capacity(rle.width as usize * rle.height as usize);
        for row in &rle.rows {
            let mut on = false;
            for &run in row {
                bits.extend(std::iter::repeat_n(on, run as usize));
                on = !on;
            }
        }
        Ok(SegmentMask { width: rle.width, height: rle.height, bits, object_label, score })
    }
}

/// Row-wise run-length encoding used on the wire.
///
/// Each row lists alternating run lengths starting with an unset run, which
/// may be zero; every later run is non-zero and the runs sum to `width`.
/// An all-clear row is `[width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRle {
    pub width: u32,
    pub height: u32,
    pub rows: Vec<Vec<u32>>,
}

impl MaskRle {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let bad = |m: String| Err(PerceptionError::MalformedMask(m));
        if self.rows.len() != self.height as usize {
            return bad(format!("{} rows for height {}", self.rows.len(), self.height));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                return bad(format!("row {i} is empty"));
            }
            if row.iter().skip(1).any(|r| *r == 0) {
                return bad(format!("row {i} has a zero-length run after the first"));
            }
            let sum: u64 = row.iter().map(|r| *r as u64).sum();
            if sum != self.width as u64 {
                return bad(format!("row {i} covers {sum} pixels, width is {}", self.width));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_layout() {
        let m = SegmentMask::from_predicate(6, 2, 1, |u, v| v == 1 && (1..4).contains(&u));
        let rle = m.to_rle();
        assert_eq!(rle.rows, vec![vec![6], vec![1, 3, 2]]);
        let full = SegmentMask::from_predicate(3, 1, 1, |_, _| true);
        assert_eq!(full.to_rle().rows, vec![vec![0, 3]]);
    }

    #[test]
    fn rle_rejects_bad_rows() {
        let rle = MaskRle { width: 4, height: 1, rows: vec![vec![1, 2]] };
        assert!(SegmentMask::from_rle(&rle, 0, 1.0).is_err());
        let rle = MaskRle { width: 4, height: 1, rows: vec![vec![1, 0, 3]] };
        assert!(SegmentMask::from_rle(&rle, 0, 1.0).is_err());
        let rle = MaskRle { width: 4, height: 2, rows: vec![vec![4]] };
        assert!(SegmentMask::from_rle(&rle, 0, 1.0).is_err());
    }

    #[test]
    fn centroid_and_shift() {
        let m = SegmentMask::from_predicate(10, 10, 3, |u, v| (2..5).contains(&u) && (6..8).contains(&v));
        assert_eq!(m.centroid(), Some((3.0, 6.5)));
        let s = m.shifted(2, -1);
        assert_eq!(s.centroid(), Some((5.0, 5.5)));
        assert_eq!(m.shifted(6, 0).count(), 2 * 2);
        assert_eq!(SegmentMask::empty(4, 4).centroid(), None);
    }

    proptest! {
        #[test]
        fn rle_roundtrip(w in 1u32..24, h in 1u32..12, seed in any::<u64>()) {
            let m = SegmentMask::from_predicate(w, h, 7, |u, v| {
                let x = (u as u64 * 31 + v as u64 * 17) ^ seed;
                x.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 62 == 0
            });
            let rle = m.to_rle();
            rle.validate().unwrap();
            let back = SegmentMask::from_rle(&rle, 7, 1.0).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.to_rle(), rle);
        }
    }
}
