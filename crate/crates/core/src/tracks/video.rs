/// `F × H × W × 3` RGB frames with values in `[0, 1]`, row-major and
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl VideoClip {
    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * 3],
        }
    }

    pub fn from_data(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == frames * height * width * 3 && data.iter().all(|v| v.is_finite())).then_some(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f32] {
        let n = self.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    pub fn pixel(&self, f: usize, r: usize, c: usize) -> [f32; 3] {
        let i = ((f * self.height + r) * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, f: usize, r: usize, c: usize, rgb: [f32; 3]) {
        let i = ((f * self.height + r) * self.width + c) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Frames `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let n = self.frame_len();
        Self {
            frames: len,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }

    /// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = quantize_u8(*v) as f32 / 255.0;
        }
        out
    }
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Per-frame depth in meters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMaps {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl DepthMaps {
    pub fn frame(&self, f: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[f * n..(f + 1) * n]
    }

    pub fn at(&self, f: usize, r: usize, c: usize) -> f32 {
        self.data[(f * self.height + r) * self.width + c]
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let n = self.height * self.width;
        Self {
            frames: len,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }
}

/// Per-frame object label maps (`0` = background).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMaps {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMaps {
    pub fn frame(&self, f: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.data[f * n..(f + 1) * n]
    }

    pub fn at(&self, f: usize, r: usize, c: usize) -> u8 {
        self.data[(f * self.height + r) * self.width + c]
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        let n = self.height * self.width;
        Self {
            frames: len,
            height: self.height,
            width: self.width,
            data: self.data[start * n..(start + len) * n].to_vec(),
        }
    }
}
