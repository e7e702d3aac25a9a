from .io import load_dataset, read_corpus, read_labels, read_provenance, save_dataset, write_events, write_labels
from .preprocess import (
    bin_and_impute,
    densify,
    build_dataset,
    fit_normalization,
    inject_missingness,
    inject_missingness_all,
    split,
    split_sizes,
)
from .records import Dataset, FeatureMatrix, PatientRecord
from .schema import FeatureSchema, FeatureSpec, load_schema, reference_schema, save_schema
from .synthetic import GeneratorConfig, generate_synthetic, label_intercept
