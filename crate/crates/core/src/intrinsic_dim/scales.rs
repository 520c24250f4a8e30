/// Per-model GRIDE scale selected after a scale analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRule {
    Fixed(usize),
    /// `early_k` for layers `0..early_layers`, `late_k` afterwards.
    Split {
        early_layers: u32,
        early_k: usize,
        late_k: usize,
    },
}

impl ScaleRule {
    pub fn k_for_layer(&self, layer: u32) -> usize {
        match *self {
            ScaleRule::Fixed(k) => k,
            ScaleRule::Split {
                early_layers,
                early_k,
                late_k,
            } => {
                if layer < early_layers {
                    early_k
                } else {
                    late_k
                }
            }
        }
    }
}

const WAVLM_BASE: ScaleRule = ScaleRule::Split {
    early_layers: 5,
    early_k: 2,
    late_k: 1,
};

/// Reference scales per model; Pythia training checkpoints are keyed as
/// `pythia-6.9b@<step>`.
pub const SCALE_PRESETS: &[(&str, ScaleRule)] = &[
    ("opt-125m", ScaleRule::Fixed(64)),
    ("opt-1.3b", ScaleRule::Fixed(32)),
    ("opt-13b", ScaleRule::Fixed(32)),
    ("pythia-410m", ScaleRule::Fixed(128)),
    ("pythia-160m", ScaleRule::Fixed(128)),
    ("pythia-6.9b", ScaleRule::Fixed(16)),
    ("pythia-6.9b@64000", ScaleRule::Fixed(16)),
    ("pythia-6.9b@32000", ScaleRule::Fixed(32)),
    ("pythia-6.9b@16000", ScaleRule::Fixed(32)),
    ("pythia-6.9b@8000", ScaleRule::Fixed(32)),
    ("pythia-6.9b@4000", ScaleRule::Fixed(64)),
    ("pythia-6.9b@2000", ScaleRule::Fixed(16)),
    ("pythia-6.9b@1000", ScaleRule::Fixed(16)),
    ("wavlm-base-plus", WAVLM_BASE),
    ("wavlm-base-plus-uts02", WAVLM_BASE),
    ("wavlm-base-plus-uts03", WAVLM_BASE),
    (
        "wavlm-large",
        ScaleRule::Split {
            early_layers: 8,
            early_k: 2,
            late_k: 1,
        },
    ),
    ("whisper-large", ScaleRule::Fixed(16)),
];

/// Case-insensitive lookup; a leading organisation (`EleutherAI/`) is ignored.
pub fn preset_scale(model: &str) -> Option<ScaleRule> {
    let name = model.rsplit('/').next().unwrap_or(model).to_ascii_lowercase();
    SCALE_PRESETS.iter().find(|(m, _)| *m == name).map(|(_, r)| *r)
}
