from src.fedlearn.aggregation import ModelUpdate, aggregate
from src.fedlearn.features import CandidateMetric, DegradationRule, FeatureSpec, LocalDataset, RuleSet, featurize
from src.fedlearn.model import FeedForwardModel, init_params, local_train, predict_violation
from src.fedlearn.ranking import rank_sli
from src.fedlearn.rounds import FLPeer, RoundConfig, RoundState, run_federated, run_round
