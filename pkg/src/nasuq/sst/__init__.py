from .grid import (
    GRID_SHAPE,
    LandMask,
    flatten_ocean,
    load_snapshots,
    read_mask,
    read_snapshots,
    unflatten_ocean,
    write_mask,
    write_snapshots,
)
from .metrics import (
    EASTERN_PACIFIC,
    histogram_diff,
    histogram_edges,
    pearson,
    pointwise_rmse,
    region_rmse,
    relative_l2,
    rmse_histogram,
    rmse_per_week,
)
from .synth import heteroscedastic, synth_generate, synthetic_sst, toy_mask, wave_field
from .tasks import (
    FORECAST_SPLIT,
    N_WEEKLY_SNAPSHOTS,
    RECONSTRUCT_SPLIT,
    WINDOW,
    SensorSet,
    WindowedDataset,
    build_forecast_windows,
    observe,
    sample_sensors,
    split,
    window_count,
)
