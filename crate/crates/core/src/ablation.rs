//! Ablation matrices: encoder combinations, aggregation orderings and the
//! window-length × sample-interval grid.

use crate::model::EncoderKind::{self, Btte, Jtte, Ptte, Ste};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AblationCell {
    pub matrix: &'static str,
    pub label: String,
    /// Execution order of the enabled encoders.
    pub encoders: Vec<EncoderKind>,
    pub fusion: bool,
    /// Overrides of the base window length / interval, if any.
    pub frames: Option<usize>,
    pub interval: Option<usize>,
}

impl AblationCell {
    fn combo(label: &str, encoders: &[EncoderKind], fusion: bool) -> Self {
        Self {
            matrix: "components",
            label: label.into(),
            encoders: encoders.to_vec(),
            fusion,
            frames: None,
            interval: None,
        }
    }

    pub fn uses(&self, kind: EncoderKind) -> bool {
        self.encoders.contains(&kind)
    }
}

/// The six encoder/fusion combinations, from STE alone to the full model.
pub fn component_cells() -> Vec<AblationCell> {
    vec![
        AblationCell::combo("model1", &[Ste], false),
        AblationCell::combo("model2", &[Ste, Jtte], false),
        AblationCell::combo("model3", &[Ste, Jtte, Btte], false),
        AblationCell::combo("model4", &[Ste, Jtte, Btte, Ptte], false),
        AblationCell::combo("model5", &[Ste, Jtte, Btte], true),
        AblationCell::combo("model6", &[Ste, Jtte, Btte, Ptte], true),
    ]
}

/// Local-to-global versus global-to-local aggregation, both fused.
pub fn ordering_cells() -> Vec<AblationCell> {
    [
        ("STE=>JTTE=>BTTE=>PTTE=>Fusion", [Ste, Jtte, Btte, Ptte]),
        ("PTTE=>BTTE=>JTTE=>STE=>Fusion", [Ptte, Btte, Jtte, Ste]),
    ]
    .into_iter()
    .map(|(label, order)| AblationCell { matrix: "ordering", ..AblationCell::combo(label, &order, true) })
    .collect()
}

/// Full model over every `(T, N)` pair.
pub fn grid_cells(frames: &[usize], intervals: &[usize]) -> Vec<AblationCell> {
    let mut out = Vec::with_capacity(frames.len() * intervals.len());
    for &t in frames {
        for &n in intervals {
            out.push(AblationCell {
                matrix: "grid",
                label: format!("T{t}_N{n}"),
                frames: Some(t),
                interval: Some(n),
                ..AblationCell::combo("", &EncoderKind::CANONICAL, true)
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_flags() {
        let flags: Vec<[bool; 5]> = component_cells()
            .iter()
            .map(|c| [c.uses(Ste), c.uses(Jtte), c.uses(Btte), c.uses(Ptte), c.fusion])
            .collect();
        assert_eq!(
            flags,
            vec![
                [true, false, false, false, false],
                [true, true, false, false, false],
                [true, true, true, false, false],
                [true, true, true, true, false],
                [true, true, true, false, true],
                [true, true, true, true, true],
            ]
        );
    }

    #[test]
    fn grid_size() {
        assert_eq!(grid_cells(&[9, 27], &[1, 3, 5, 7]).len(), 8);
        assert_eq!(ordering_cells()[1].encoders, vec![Ptte, Btte, Jtte, Ste]);
    }
}
