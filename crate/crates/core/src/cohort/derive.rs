use indexmap::IndexMap;

use super::raw::{ColumnData, RawCohort};
use super::schema::{CohortSchema, Derivation, FeatureKind};
use super::CohortError;

/// Rows whose derived value was set missing because a ratio denominator was zero.
pub type ZeroDenominators = IndexMap<String, usize>;

/// Adds every derived column of the schema. A derived value is missing when
/// any input is missing or when a ratio's denominator is zero; the latter is
/// counted per column.
pub fn derive_features(
    raw: &RawCohort,
    schema: &CohortSchema,
) -> Result<(RawCohort, ZeroDenominators), CohortError> {
    let mut out = raw.clone();
    let mut zero_denominators = IndexMap::new();
    let n = raw.n_rows();
    for spec in schema.features.iter().filter(|f| f.kind == FeatureKind::Derived) {
        let derivation = spec
            .derivation
            .ok_or_else(|| CohortError::Schema(format!("'{}' has no derivation", spec.name)))?;
        let inputs: Vec<&[Option<f64>]> = spec
            .inputs
            .iter()
            .map(|name| {
                raw.column(name)
                    .and_then(ColumnData::as_numeric)
                    .ok_or_else(|| CohortError::MissingColumn(name.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut zeros = 0usize;
        let values: Vec<Option<f64>> = (0..n)
            .map(|row| {
                let xs: Option<Vec<f64>> = inputs.iter().map(|col| col[row]).collect();
                let xs = xs?;
                match derivation {
                    Derivation::Ratio => {
                        if xs[1] == 0.0 {
                            zeros += 1;
                            None
                        } else {
                            Some(xs[0] / xs[1])
                        }
                    }
                    Derivation::Sum => Some(xs.iter().sum()),
                }
            })
            .collect();
        if zeros > 0 {
            log::warn!("{zeros} rows of '{}' had a zero denominator", spec.name);
        }
        zero_denominators.insert(spec.name.clone(), zeros);
        out.columns.insert(spec.name.clone(), ColumnData::Numeric(values));
    }
    Ok((out, zero_denominators))
}
