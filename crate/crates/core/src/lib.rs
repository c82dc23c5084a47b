pub mod classifier;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod knn;
pub mod lexicon;
pub mod metrics;
pub mod dtree;
pub mod mlp;
pub mod mep;
pub mod svm;
pub mod runner;

pub use classifier::Classifier;
pub use corpus::{build_feature_set, featurize, load_corpus, Document, FeatureSet, FeatureSetName};
pub use dataset::{read_matrix, split_corpus, write_matrix, DatasetId, FeatureMatrix, Row, Split};
pub use dtree::{dtree_train, DecisionTree, TreeOptions};
pub use error::{Error, Result};
pub use knn::KnnModel;
pub use lexicon::{load_lexicon, IposKind, Lexicon};
pub use mep::{mep_evolve, MepModel, MepParams};
pub use metrics::{confusion, report, summarize, t_test, ConfusionMatrix, MetricsReport, RunSummary};
pub use mlp::{mlp_train, MlpConfig, MlpModel};
pub use runner::{run_plan, ExperimentPlan, Method, ResultTable};
pub use svm::{svm_train, KernelKind, SvmConfig, SvmModel};
