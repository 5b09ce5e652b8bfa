"""Unsupervised thermal condition monitoring of robot joints with an LSTM VAE.

The package learns the distribution of thermally uncritical joint-state
windows, flags overheating-prone motions by reconstruction error, condenses
the risk into a shareable per-joint thermal-difficulty score, and samples
new uncritical motion profiles.  A built-in synthetic thermal plant makes
the whole pipeline verifiable at desk scale.
"""

from .autodiff import (AutodiffError, DomainError, GradCheckReport, Node,
                       ShapeError, Tape, gradient_check)
from .data import (CsvFormatError, DataError, Normalizer, PlantConfig,
                   RobotState, Trajectory, Window, channel_names,
                   fit_normalizer, kind_slices, load_csv, load_windows_csv,
                   plant_config_from_json, plant_config_to_json, save_csv,
                   save_windows_csv, simulate, windows)
from .monitor import (AnomalyVerdict, DifficultyReport, LatentExport,
                      MonitorError, ReconErrors, ReportFormatError,
                      calibrate_threshold, channel_kind_errors, difficulty,
                      emit_report, export_latent, joint_difficulty,
                      make_verdicts, parse_report, per_channel_errors,
                      recon_error_series, window_scores)
from .nn import (DenseLayer, LstmLayer, Optimizer, dense_forward, init_dense,
                 init_lstm, lstm_scan, lstm_sequence, lstm_step,
                 optimizer_step)
from .vae import (LatentCode, ModelFormatError, TrainConfig, TrainHistory,
                  TrainingDivergedError, VaeModel, decode, decode_batch,
                  encode, encode_batch, generate, kl_divergence, load, loss,
                  loss_graph, model_fingerprint, reconstruct,
                  reconstruction_loss, reparameterize, save, train,
                  validation_split)

__version__ = "0.1.0"
