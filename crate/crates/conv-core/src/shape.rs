use serde::{Deserialize, Serialize};

use crate::error::ConvError;

/// Raw, unvalidated convolution parameters.
///
/// Signed so that negative inputs coming from files or the command line are
/// reported as [`ConvError::InvalidParam`] rather than wrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub b: i64,
    pub ic: i64,
    pub oc: i64,
    pub in_h: i64,
    pub in_w: i64,
    pub flt_h: i64,
    pub flt_w: i64,
    #[serde(default)]
    pub pad_h: i64,
    #[serde(default)]
    pub pad_w: i64,
    #[serde(default = "one")]
    pub std_h: i64,
    #[serde(default = "one")]
    pub std_w: i64,
}

fn one() -> i64 {
    1
}

impl ConvParams {
    /// Square input and filter, symmetric padding and stride.
    pub fn square(b: i64, ic: i64, oc: i64, in_size: i64, flt: i64, pad: i64, stride: i64) -> Self {
        Self {
            b,
            ic,
            oc,
            in_h: in_size,
            in_w: in_size,
            flt_h: flt,
            flt_w: flt,
            pad_h: pad,
            pad_w: pad,
            std_h: stride,
            std_w: stride,
        }
    }
}

/// A validated convolution shape with derived output dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvShape {
    pub b: usize,
    pub ic: usize,
    pub oc: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub flt_h: usize,
    pub flt_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub std_h: usize,
    pub std_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvShape {
    pub fn new(p: ConvParams) -> Result<Self, ConvError> {
        let positive = [
            ("B", p.b),
            ("IC", p.ic),
            ("OC", p.oc),
            ("inH", p.in_h),
            ("inW", p.in_w),
            ("fltH", p.flt_h),
            ("fltW", p.flt_w),
            ("stdH", p.std_h),
            ("stdW", p.std_w),
        ];
        for (name, value) in positive {
            if value < 1 {
                return Err(ConvError::InvalidParam { name, value });
            }
        }
        for (name, value) in [("padH", p.pad_h), ("padW", p.pad_w)] {
            if value < 0 {
                return Err(ConvError::InvalidParam { name, value });
            }
        }
        // Keep every derived index comfortably inside usize/i64 arithmetic.
        const LIMIT: i64 = 1 << 24;
        for (name, value) in positive.iter().copied().chain([("padH", p.pad_h), ("padW", p.pad_w)]) {
            if value > LIMIT {
                return Err(ConvError::InvalidParam { name, value });
            }
        }

        let out_h = (p.in_h + 2 * p.pad_h - p.flt_h).div_euclid(p.std_h) + 1;
        let out_w = (p.in_w + 2 * p.pad_w - p.flt_w).div_euclid(p.std_w) + 1;
        if out_h < 1 || out_w < 1 {
            return Err(ConvError::NonPositiveOutput { out_h, out_w });
        }

        Ok(Self {
            b: p.b as usize,
            ic: p.ic as usize,
            oc: p.oc as usize,
            in_h: p.in_h as usize,
            in_w: p.in_w as usize,
            flt_h: p.flt_h as usize,
            flt_w: p.flt_w as usize,
            pad_h: p.pad_h as usize,
            pad_w: p.pad_w as usize,
            std_h: p.std_h as usize,
            std_w: p.std_w as usize,
            out_h: out_h as usize,
            out_w: out_w as usize,
        })
    }

    pub fn params(&self) -> ConvParams {
        ConvParams {
            b: self.b as i64,
            ic: self.ic as i64,
            oc: self.oc as i64,
            in_h: self.in_h as i64,
            in_w: self.in_w as i64,
            flt_h: self.flt_h as i64,
            flt_w: self.flt_w as i64,
            pad_h: self.pad_h as i64,
            pad_w: self.pad_w as i64,
            std_h: self.std_h as i64,
            std_w: self.std_w as i64,
        }
    }

    /// Input coordinate read by output `(oh, ow)` through filter tap `(fh, fw)`,
    /// or `None` when it falls in the padding.
    #[inline]
    pub fn input_coord(&self, oh: usize, ow: usize, fh: usize, fw: usize) -> Option<(usize, usize)> {
        let ih = (oh * self.std_h + fh) as isize - self.pad_h as isize;
        let iw = (ow * self.std_w + fw) as isize - self.pad_w as isize;
        if ih < 0 || iw < 0 || ih as usize >= self.in_h || iw as usize >= self.in_w {
            None
        } else {
            Some((ih as usize, iw as usize))
        }
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_dims(&self) -> [usize; 4] {
        [self.in_h, self.in_w, self.ic, self.b]
    }

    pub fn flt_dims(&self) -> [usize; 4] {
        [self.flt_h, self.flt_w, self.ic, self.oc]
    }

    pub fn out_dims(&self) -> [usize; 4] {
        [self.out_h, self.out_w, self.oc, self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(in_size: i64, flt: i64, pad: i64, stride: i64) -> Result<ConvShape, ConvError> {
        ConvShape::new(ConvParams::square(1, 1, 1, in_size, flt, pad, stride))
    }

    /// Counts output rows by enumerating candidate `oh` and keeping those whose
    /// window start lies inside the padded input.
    fn enumerate_out(in_size: i64, flt: i64, pad: i64, stride: i64) -> i64 {
        (0..=in_size + 2 * pad)
            .filter(|oh| oh * stride + flt <= in_size + 2 * pad)
            .count() as i64
    }

    #[test]
    fn output_sizes() {
        assert_eq!(sq(8, 3, 0, 1).unwrap().out_h, 6);
        assert_eq!(sq(8, 3, 0, 1).unwrap().out_positions(), 36);
        assert_eq!(sq(5, 5, 0, 1).unwrap().out_h, 1);
        assert_eq!(enumerate_out(7, 3, 1, 2), 4);
        assert_eq!(sq(7, 3, 1, 2).unwrap().out_h, 4);
    }

    #[test]
    fn output_matches_enumeration() {
        for in_size in 1..12 {
            for flt in 1..6 {
                for pad in 0..3 {
                    for stride in 1..4 {
                        let expected = enumerate_out(in_size, flt, pad, stride);
                        match sq(in_size, flt, pad, stride) {
                            Ok(s) => assert_eq!(s.out_h as i64, expected),
                            Err(ConvError::NonPositiveOutput { .. }) => assert_eq!(expected, 0),
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(sq(2, 3, 0, 1), Err(ConvError::NonPositiveOutput { .. })));
        assert!(matches!(sq(0, 1, 0, 1), Err(ConvError::InvalidParam { name: "inH", .. })));
        assert!(matches!(sq(4, 1, -1, 1), Err(ConvError::InvalidParam { name: "padH", .. })));
        assert!(matches!(sq(4, 1, 0, 0), Err(ConvError::InvalidParam { name: "stdH", .. })));
        assert!(matches!(
            ConvShape::new(ConvParams::square(0, 1, 1, 4, 1, 0, 1)),
            Err(ConvError::InvalidParam { name: "B", .. })
        ));
    }

    #[test]
    fn input_coord_respects_padding() {
        let s = sq(7, 3, 1, 2).unwrap();
        assert_eq!(s.input_coord(0, 0, 0, 0), None);
        assert_eq!(s.input_coord(0, 0, 1, 1), Some((0, 0)));
        assert_eq!(s.input_coord(3, 3, 2, 2), None);
        assert_eq!(s.input_coord(3, 3, 1, 1), Some((6, 6)));
    }
}
