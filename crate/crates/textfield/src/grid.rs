//! Dense row-major 2-D containers shared across the crate.
//!
//! All image-like data uses the same frame: origin at the top-left corner,
//! x growing rightward, y growing downward, pixels addressed as (x, y).

use std::ops::{Index, IndexMut};

/// Row-major 2-D array addressed by (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: u32,
    height: u32,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    /// Creates a grid filled with copies of `fill`.
    pub fn new(width: u32, height: u32, fill: T) -> Self {
        let len = width as usize * height as usize;
        Grid {
            width,
            height,
            data: vec![fill; len],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps an existing row-major buffer.
    ///
    /// Panics if the buffer length is not `width * height`.
    pub fn from_vec(width: u32, height: u32, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "buffer length does not match grid dimensions"
        );
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// True when the signed coordinates lie inside the grid.
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(
            x < self.width && y < self.height,
            "({x}, {y}) out of bounds"
        );
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: T) {
        let i = self.offset(x, y);
        self.data[i] = value;
    }

    /// Row-major view of the underlying buffer.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> T {
        self.data[self.offset(x, y)]
    }
}

impl<T> Index<(u32, u32)> for Grid<T> {
    type Output = T;

    fn index(&self, (x, y): (u32, u32)) -> &T {
        &self.data[self.offset(x, y)]
    }
}

impl<T> IndexMut<(u32, u32)> for Grid<T> {
    fn index_mut(&mut self, (x, y): (u32, u32)) -> &mut T {
        let i = self.offset(x, y);
        &mut self.data[i]
    }
}

/// Per-pixel boolean mask; `true` marks text, `false` background.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            grid: Grid::new(width, height, false),
        }
    }

    pub fn from_grid(grid: Grid<bool>) -> Self {
        BinaryMask { grid }
    }

    pub fn width(&self) -> u32 {
        self.grid.width()
    }

    pub fn height(&self) -> u32 {
        self.grid.height()
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        self.grid.in_bounds(x, y)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.grid.get(x, y)
    }

    /// Signed-coordinate lookup; everything outside the domain reads as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        self.grid.in_bounds(x, y) && self.grid.get(x as u32, y as u32)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.grid.set(x, y, value);
    }

    pub fn count_true(&self) -> u64 {
        self.grid.data().iter().filter(|&&v| v).count() as u64
    }

    pub fn data(&self) -> &[bool] {
        self.grid.data()
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        self.grid.data_mut()
    }
}

/// Per-pixel instance labels; 0 is background, instances are numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    grid: Grid<u32>,
}

impl InstanceMap {
    /// All-background map.
    pub fn new(width: u32, height: u32) -> Self {
        InstanceMap {
            grid: Grid::new(width, height, 0),
        }
    }

    pub fn from_grid(grid: Grid<u32>) -> Self {
        InstanceMap { grid }
    }

    pub fn width(&self) -> u32 {
        self.grid.width()
    }

    pub fn height(&self) -> u32 {
        self.grid.height()
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        self.grid.in_bounds(x, y)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.grid.get(x, y)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, label: u32) {
        self.grid.set(x, y, label);
    }

    pub fn data(&self) -> &[u32] {
        self.grid.data()
    }

    /// Distinct nonzero labels with their pixel counts, ascending by label.
    pub fn label_areas(&self) -> Vec<(u32, u64)> {
        let mut counts = std::collections::BTreeMap::new();
        for &v in self.grid.data() {
            if v != 0 {
                *counts.entry(v).or_insert(0u64) += 1;
            }
        }
        counts.into_iter().collect()
    }

    pub fn count_nonzero(&self) -> u64 {
        self.grid.data().iter().filter(|&&v| v != 0).count() as u64
    }

    /// Mask of all labeled pixels.
    pub fn to_mask(&self) -> BinaryMask {
        let data = self.grid.data().iter().map(|&v| v != 0).collect();
        BinaryMask::from_grid(Grid::from_vec(self.width(), self.height(), data))
    }
}
