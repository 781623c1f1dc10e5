from distilled.gdbn.em import e_step, em_impute, observed_loglik
from distilled.gdbn.learn import Moments, fit_parameters, learn_structure
from distilled.gdbn.medical import (
    PartitionedTrainSet,
    corrupt_partitions,
    dd_loss_eval,
    distill_medical,
    fit_dbn,
    initial_synthetic,
    mean_test_ll,
    medical_binding,
)
from distilled.gdbn.model import (
    DbnStructure,
    GaussianDbn,
    column_names,
    load_dbn,
    log_likelihood,
    random_gdbn,
    read_matrix_csv,
    sample_gdbn,
    save_dbn,
    write_matrix_csv,
)
