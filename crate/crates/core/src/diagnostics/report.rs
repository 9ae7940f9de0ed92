//! First-visit normalization and cross-layer aggregation.

use super::probe::VisitProbe;
use crate::error::{Error, Result};

/// Statistics that are first-visit-normalized per layer and aggregated
/// weighted by layer weight counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormStat {
    WeightChange,
    GradL0,
    GradL1,
    GradL2,
}

impl NormStat {
    pub fn name(&self) -> &'static str {
        match self {
            NormStat::WeightChange => "weight_change",
            NormStat::GradL0 => "grad_l0",
            NormStat::GradL1 => "grad_l1",
            NormStat::GradL2 => "grad_l2",
        }
    }
}

/// Completed probes for one run plus the layer/site weighting tables.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsReport {
    /// (layer name, weight count); the aggregation weights.
    pub layer_weights: Vec<(String, usize)>,
    /// (site name, unit count).
    pub site_units: Vec<(String, usize)>,
    /// Names of the stream hidden sites (activation collapse happens here).
    pub hidden_sites: Vec<String>,
    pub probes: Vec<VisitProbe>,
}

impl DiagnosticsReport {
    fn raw_layer_values<'a>(&self, probe: &'a VisitProbe, stat: NormStat) -> Vec<(&'a str, f64)> {
        match stat {
            NormStat::WeightChange => probe
                .weight_change
                .iter()
                .map(|(l, v)| (l.as_str(), *v))
                .collect(),
            NormStat::GradL0 => probe.grad_norms.iter().map(|g| (g.layer.as_str(), g.l0)).collect(),
            NormStat::GradL1 => probe.grad_norms.iter().map(|g| (g.layer.as_str(), g.l1)).collect(),
            NormStat::GradL2 => probe.grad_norms.iter().map(|g| (g.layer.as_str(), g.l2)).collect(),
        }
    }

    fn first_visit_probe(&self, task_id: &str) -> Option<&VisitProbe> {
        self.probes.iter().find(|p| p.task_id == task_id && p.visit == 0)
    }

    pub fn task_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.probes {
            if !out.iter().any(|t| t == &p.task_id) {
                out.push(p.task_id.clone());
            }
        }
        out
    }

    fn layer_weight(&self, layer: &str) -> f64 {
        self.layer_weights
            .iter()
            .find(|(l, _)| l == layer)
            .map(|(_, w)| *w as f64)
            .unwrap_or(0.0)
    }

    /// Normalized, weight-count-aggregated value of one probe: each layer
    /// divided by its first-visit value, then averaged with the layer's
    /// weight count as its weight. Layers whose first-visit value is
    /// exactly zero are excluded (logged once per call).
    ///
    /// The first visit's own aggregate is exactly 1.0: each ratio is x/x
    /// and the weighted mean accumulates numerator and denominator in the
    /// same order.
    pub fn normalized_probe(&self, probe: &VisitProbe, stat: NormStat) -> Result<f64> {
        let reference = self.first_visit_probe(&probe.task_id).ok_or_else(|| {
            Error::usage(format!("no first-visit probe for task {}", probe.task_id))
        })?;
        let base = self.raw_layer_values(reference, stat);
        let now = self.raw_layer_values(probe, stat);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((layer, b), (layer2, v)) in base.iter().zip(now.iter()) {
            debug_assert_eq!(layer, layer2);
            if *b == 0.0 {
                log::warn!(
                    "{} of layer {layer} is exactly 0 on the first visit of {}; layer excluded from normalization",
                    stat.name(),
                    probe.task_id
                );
                continue;
            }
            let w = self.layer_weight(layer);
            num += w * (v / b);
            den += w;
        }
        if den == 0.0 {
            return Err(Error::usage(format!(
                "every layer was excluded normalizing {} for task {}",
                stat.name(),
                probe.task_id
            )));
        }
        Ok(num / den)
    }

    /// (visit, normalized aggregate) series for one task.
    pub fn normalized_series(&self, task_id: &str, stat: NormStat) -> Result<Vec<(u64, f64)>> {
        let mut out = Vec::new();
        for p in self.probes.iter().filter(|p| p.task_id == task_id) {
            out.push((p.visit, self.normalized_probe(p, stat)?));
        }
        Ok(out)
    }

    /// Raw activation nonzero fraction per visit for one site of one task.
    pub fn activation_series(&self, task_id: &str, site: &str) -> Vec<(u64, f64)> {
        self.probes
            .iter()
            .filter(|p| p.task_id == task_id)
            .filter_map(|p| {
                p.activations
                    .iter()
                    .find(|a| a.site == site)
                    .map(|a| (p.visit, a.nonzero_fraction()))
            })
            .collect()
    }

    /// Unit-count-weighted mean activation fraction over the stream hidden
    /// sites, per visit.
    pub fn hidden_activation_series(&self, task_id: &str) -> Vec<(u64, f64)> {
        self.probes
            .iter()
            .filter(|p| p.task_id == task_id)
            .map(|p| {
                let mut num = 0.0;
                let mut den = 0.0;
                for a in &p.activations {
                    if self.hidden_sites.iter().any(|h| h == &a.site) {
                        let units = self
                            .site_units
                            .iter()
                            .find(|(s, _)| s == &a.site)
                            .map(|(_, u)| *u as f64)
                            .unwrap_or(0.0);
                        num += units * a.nonzero_fraction();
                        den += units;
                    }
                }
                (p.visit, if den == 0.0 { 0.0 } else { num / den })
            })
            .collect()
    }

    pub fn loss_series(&self, task_id: &str) -> Vec<(u64, f64)> {
        self.probes
            .iter()
            .filter(|p| p.task_id == task_id)
            .map(|p| (p.visit, p.mean_loss))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::probe::{LayerGradNorms, SiteActivationStats};

    fn probe(task: &str, visit: u64, wc: &[(&str, f64)]) -> VisitProbe {
        VisitProbe {
            task_index: 0,
            task_id: task.into(),
            visit,
            probe_frame: visit * 100,
            weight_change: wc.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
            grad_norms: wc
                .iter()
                .map(|(l, v)| LayerGradNorms { layer: l.to_string(), l0: *v, l1: *v, l2: *v })
                .collect(),
            activations: vec![SiteActivationStats {
                site: "value_hidden".into(),
                nonzero: 8,
                total: 20,
                pre_zero: 0,
                pre_total: 10,
            }],
            mean_loss: 0.5,
        }
    }

    fn report(probes: Vec<VisitProbe>) -> DiagnosticsReport {
        DiagnosticsReport {
            layer_weights: vec![("a".into(), 10), ("b".into(), 30)],
            site_units: vec![("value_hidden".into(), 20)],
            hidden_sites: vec!["value_hidden".into()],
            probes,
        }
    }

    #[test]
    fn first_visit_aggregate_is_exactly_one() {
        let r = report(vec![
            probe("t", 0, &[("a", 0.123456), ("b", 7.89)]),
            probe("t", 1, &[("a", 0.061728), ("b", 1.9725)]),
        ]);
        let series = r.normalized_series("t", NormStat::WeightChange).unwrap();
        assert_eq!(series[0].1, 1.0);
        // visit-1 values: a halved (0.5), b quartered (0.25);
        // aggregate = (10*0.5 + 30*0.25) / 40 = 0.3125.
        assert!((series[1].1 - 0.3125).abs() < 1e-12);
    }

    #[test]
    fn normalization_examples() {
        // First-visit 4.0, later 1.0 -> 0.25.
        let r = report(vec![
            probe("t", 0, &[("a", 4.0), ("b", 4.0)]),
            probe("t", 2, &[("a", 1.0), ("b", 1.0)]),
        ]);
        let s = r.normalized_series("t", NormStat::WeightChange).unwrap();
        assert_eq!(s[1].1, 0.25);

        // Weighted aggregation: counts (10, 30) and values (0.2, 0.6)
        // relative to first-visit 1.0 -> 0.5.
        let r = report(vec![
            probe("t", 0, &[("a", 1.0), ("b", 1.0)]),
            probe("t", 1, &[("a", 0.2), ("b", 0.6)]),
        ]);
        let s = r.normalized_series("t", NormStat::WeightChange).unwrap();
        assert_eq!(s[1].1, 0.5);
    }

    #[test]
    fn zero_first_visit_layer_excluded() {
        let r = report(vec![
            probe("t", 0, &[("a", 0.0), ("b", 2.0)]),
            probe("t", 1, &[("a", 5.0), ("b", 1.0)]),
        ]);
        let s = r.normalized_series("t", NormStat::WeightChange).unwrap();
        // Only layer b participates: 1.0 / 2.0.
        assert_eq!(s[1].1, 0.5);
    }

    #[test]
    fn normalized_values_may_exceed_one() {
        let r = report(vec![
            probe("t", 0, &[("a", 1.0), ("b", 1.0)]),
            probe("t", 1, &[("a", 3.0), ("b", 3.0)]),
        ]);
        let s = r.normalized_series("t", NormStat::WeightChange).unwrap();
        assert!(s[1].1 > 1.0);
    }
}
