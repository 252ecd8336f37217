//! Bit-packed monochrome images and pixel rectangles.
//!
//! Pixels are addressed `(k, l)` with `k` the 1-based column and `l` the
//! 1-based row; `(1, 1)` is the top-left pixel. Rows are packed into `u64`
//! words so whole-image logic (masking, Hamming distance, emptiness) runs on
//! words rather than pixels.

/// Inclusive rectangle of pixels in 1-based `(k, l)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub k_min: u32,
    pub l_min: u32,
    pub k_max: u32,
    pub l_max: u32,
}

impl PixelRect {
    pub fn new(k_min: u32, l_min: u32, k_max: u32, l_max: u32) -> PixelRect {
        PixelRect { k_min, l_min, k_max, l_max }
    }

    pub fn is_empty(&self) -> bool {
        self.k_min > self.k_max || self.l_min > self.l_max
    }

    pub fn width(&self) -> u32 {
        if self.is_empty() { 0 } else { self.k_max - self.k_min + 1 }
    }

    pub fn height(&self) -> u32 {
        if self.is_empty() { 0 } else { self.l_max - self.l_min + 1 }
    }

    pub fn contains(&self, k: u32, l: u32) -> bool {
        (self.k_min..=self.k_max).contains(&k) && (self.l_min..=self.l_max).contains(&l)
    }

    pub fn intersect(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            k_min: self.k_min.max(other.k_min),
            l_min: self.l_min.max(other.l_min),
            k_max: self.k_max.min(other.k_max),
            l_max: self.l_max.min(other.l_max),
        }
    }

    pub fn hull(&self, other: &PixelRect) -> PixelRect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        PixelRect {
            k_min: self.k_min.min(other.k_min),
            l_min: self.l_min.min(other.l_min),
            k_max: self.k_max.max(other.k_max),
            l_max: self.l_max.max(other.l_max),
        }
    }

    /// Grow by `r` pixels on every side, clamped to the `width x height` frame.
    pub fn dilate_clamped(&self, r: u32, width: u32, height: u32) -> PixelRect {
        if self.is_empty() {
            return *self;
        }
        PixelRect {
            k_min: self.k_min.saturating_sub(r).max(1),
            l_min: self.l_min.saturating_sub(r).max(1),
            k_max: (self.k_max + r).min(width),
            l_max: (self.l_max + r).min(height),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let rect = *self;
        (rect.l_min..=rect.l_max)
            .flat_map(move |l| (rect.k_min..=rect.k_max).map(move |k| (k, l)))
    }
}

/// Monochrome image; a set bit is a lit pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: u32,
    height: u32,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BinaryImage {
    pub fn new(width: u32, height: u32) -> BinaryImage {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let words_per_row = (width as usize).div_ceil(64);
        BinaryImage {
            width,
            height,
            words_per_row,
            words: vec![0; words_per_row * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame(&self) -> PixelRect {
        PixelRect::new(1, 1, self.width, self.height)
    }

    #[inline]
    fn index(&self, k: u32, l: u32) -> (usize, u64) {
        debug_assert!(
            (1..=self.width).contains(&k) && (1..=self.height).contains(&l),
            "pixel ({k}, {l}) outside {}x{} image",
            self.width,
            self.height
        );
        let col = (k - 1) as usize;
        let row = (l - 1) as usize;
        (row * self.words_per_row + col / 64, 1u64 << (col % 64))
    }

    #[inline]
    pub fn get(&self, k: u32, l: u32) -> bool {
        let (w, bit) = self.index(k, l);
        self.words[w] & bit != 0
    }

    #[inline]
    pub fn set(&mut self, k: u32, l: u32, lit: bool) {
        let (w, bit) = self.index(k, l);
        if lit {
            self.words[w] |= bit;
        } else {
            self.words[w] &= !bit;
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn count_lit(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn assert_same_size(&self, other: &BinaryImage) {
        assert!(
            self.width == other.width && self.height == other.height,
            "image size mismatch: {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
    }

    pub fn and(&self, other: &BinaryImage) -> BinaryImage {
        self.assert_same_size(other);
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w &= o;
        }
        out
    }

    pub fn or(&self, other: &BinaryImage) -> BinaryImage {
        self.assert_same_size(other);
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
        out
    }

    /// Pixels lit here but not in `other`.
    pub fn and_not(&self, other: &BinaryImage) -> BinaryImage {
        self.assert_same_size(other);
        let mut out = self.clone();
        for (w, o) in out.words.iter_mut().zip(&other.words) {
            *w &= !o;
        }
        out
    }

    pub fn or_inplace(&mut self, other: &BinaryImage) {
        self.assert_same_size(other);
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    /// Number of pixels on which the two images disagree.
    pub fn hamming(&self, other: &BinaryImage) -> usize {
        self.assert_same_size(other);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Hamming distance restricted to a window (clipped to the frame).
    pub fn hamming_in(&self, other: &BinaryImage, window: &PixelRect) -> usize {
        self.assert_same_size(other);
        let win = window.intersect(&self.frame());
        if win.is_empty() {
            return 0;
        }
        win.iter()
            .filter(|&(k, l)| self.get(k, l) != other.get(k, l))
            .count()
    }

    /// Lit-pixel count restricted to a window (clipped to the frame).
    pub fn count_lit_in(&self, window: &PixelRect) -> usize {
        let win = window.intersect(&self.frame());
        if win.is_empty() {
            return 0;
        }
        win.iter().filter(|&(k, l)| self.get(k, l)).count()
    }

    pub fn iter_lit(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (1..=self.height).flat_map(move |l| {
            (1..=self.width).filter_map(move |k| self.get(k, l).then_some((k, l)))
        })
    }

    /// Tight bounding rectangle of the lit pixels, if any.
    pub fn lit_bounds(&self) -> Option<PixelRect> {
        let mut rect: Option<PixelRect> = None;
        for (k, l) in self.iter_lit() {
            let px = PixelRect::new(k, l, k, l);
            rect = Some(match rect {
                None => px,
                Some(r) => r.hull(&px),
            });
        }
        rect
    }
}
