from distilled.pinn.mlp import AdamState, Jets, Mlp, adam_step, backward_jets, forward_jets
from distilled.pinn.physics import (
    TEST_UPPER,
    TRAIN_LOWER,
    AnalyticSolution,
    BoundaryPrior,
    PinnDataset,
    SecondOrderEval,
    TrainConfig,
    TrainingDivergence,
    generate_pinn_data,
    laplace_residual,
    pinn_loss,
    pinn_loss_and_grad,
    polar_lattice,
    second_order_eval,
    train_pinn,
    train_with,
)
from distilled.pinn.distill import (
    GAUSSIAN_NOISE,
    PINN_SCHEMA,
    SUBSAMPLE_TRAIN,
    distill_pinn,
    l2_test_error,
    outer_objective,
    pooled_dataset,
    read_pinn_csv,
    subsample_dataset,
    to_pinn_dataset,
    write_pinn_csv,
)
