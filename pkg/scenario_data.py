"""
Scenario Data - Electricity prices and vehicle arrivals for the station
CSV loaders and writers, a seeded synthetic generator and JSON scenario
bundles that travel with every experiment run.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from station_env import DEFAULT_USER_TYPES, ScenarioConfig

logger = logging.getLogger(__name__)

PRICE_COLUMNS = ('timestamp', 'price_cny_per_kwh')
ARRIVAL_COLUMNS = ('slot', 'arrivals')
DEFAULT_TYPE_NAMES = tuple(t.name for t in DEFAULT_USER_TYPES)


class SchemaError(ValueError):
    """Raised for CSV files that do not follow the documented schema"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        super().__init__(f"{', '.join(location)}: {message}" if location else message)
        self.line = line
        self.column = column

    def details(self) -> Dict:
        return {'line': self.line, 'column': self.column}


@dataclass
class PriceSeries:
    """Electricity price of every slot, CNY/kWh"""

    prices: np.ndarray
    source: str = ''
    slot_minutes: int = 5

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.prices)):
            raise ValueError("prices: must be finite")
        if np.any(self.prices < 0):
            raise ValueError("prices: must be non-negative")

    def __len__(self) -> int:
        return int(self.prices.size)


@dataclass
class ArrivalSeries:
    """Arrival count of every slot, optionally split by user type"""

    counts: np.ndarray
    type_counts: Optional[np.ndarray] = None
    source: str = ''

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if np.any(self.counts < 0):
            raise ValueError("arrivals: counts must be non-negative")
        if self.type_counts is not None:
            self.type_counts = np.asarray(self.type_counts, dtype=np.int64)
            if self.type_counts.ndim != 2 or self.type_counts.shape[0] != self.counts.size:
                raise ValueError("arrivals: type_counts must have one row per slot")
            if not np.array_equal(self.type_counts.sum(axis=1), self.counts):
                raise ValueError("arrivals: type_counts rows must sum to the slot counts")

    def __len__(self) -> int:
        return int(self.counts.size)


# ---------------------------------------------------------------- CSV

def _read_table(path: str, required: Sequence[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"cannot parse {path}: {e}") from e
    df.columns = [c.strip() for c in df.columns]
    for column in required:
        if column not in df.columns:
            raise SchemaError(f"missing required column in {path}", column=column)
    return df


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"not a number: {text!r}", line=line, column=column) from None
    if not math.isfinite(value):
        raise SchemaError(f"not a finite number: {text!r}", line=line, column=column)
    return value


def _parse_count(text: str, line: int, column: str) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise SchemaError(f"not an integer count: {text!r}", line=line, column=column) from None
    if value < 0:
        raise SchemaError(f"negative count {value}", line=line, column=column)
    return value


def load_price_csv(path: str, slot_minutes: int = 5, row_minutes: Optional[int] = None) -> PriceSeries:
    """
    Load a "timestamp,price_cny_per_kwh" file into a per-slot series.

    Row spacing is read from the timestamps (a single-row file counts as
    hourly unless `row_minutes` says otherwise); each row is repeated
    row_minutes / slot_minutes times.
    Returns: PriceSeries
    Raises: SchemaError naming the line and column of the first bad entry
    """
    df = _read_table(path, PRICE_COLUMNS)
    if df.empty:
        raise SchemaError(f"no price rows in {path}")

    prices = []
    for index, text in enumerate(df['price_cny_per_kwh']):
        line = index + 2
        value = _parse_float(text, line, 'price_cny_per_kwh')
        if value < 0:
            raise SchemaError(f"negative price {value}", line=line, column='price_cny_per_kwh')
        prices.append(value)

    stamps = pd.to_datetime(df['timestamp'], errors='coerce')
    bad = np.flatnonzero(stamps.isna().to_numpy())
    if bad.size:
        raise SchemaError(f"unreadable timestamp {df['timestamp'].iloc[bad[0]]!r}",
                          line=int(bad[0]) + 2, column='timestamp')

    if row_minutes is None:
        if len(stamps) == 1:
            row_minutes = 60
        else:
            spacing = stamps.diff().dropna().dt.total_seconds().to_numpy() / 60.0
            if not np.all(spacing == spacing[0]):
                uneven = int(np.flatnonzero(spacing != spacing[0])[0]) + 3
                raise SchemaError("timestamps are not evenly spaced", line=uneven, column='timestamp')
            row_minutes = spacing[0]
    if row_minutes <= 0 or row_minutes % slot_minutes:
        raise SchemaError(
            f"row spacing of {row_minutes} minutes is not a positive multiple of {slot_minutes}-minute slots",
            column='timestamp',
        )
    repeat = int(row_minutes // slot_minutes)
    logger.debug("loaded %d price rows from %s, %d slots per row", len(prices), path, repeat)
    return PriceSeries(np.repeat(prices, repeat), source=str(path), slot_minutes=slot_minutes)


def write_price_csv(series: PriceSeries, path: str, start: str = '2024-01-01 00:00'):
    """One row per slot, so that load_price_csv gives the series back unchanged"""
    stamps = pd.date_range(start=start, periods=len(series), freq=f'{series.slot_minutes}min')
    df = pd.DataFrame({
        'timestamp': stamps.strftime('%Y-%m-%d %H:%M'),
        'price_cny_per_kwh': [repr(float(p)) for p in series.prices],
    })
    df.to_csv(path, index=False)


def load_arrivals_csv(path: str, type_names: Sequence[str] = DEFAULT_TYPE_NAMES) -> ArrivalSeries:
    """
    Load a "slot,arrivals[,type]" file.

    Without a type column every row is the total count of its slot. With one,
    each row counts arrivals of a single type (given by name or index) and
    rows of the same slot add up. Slots that never appear have no arrivals.
    Returns: ArrivalSeries
    """
    df = _read_table(path, ARRIVAL_COLUMNS)
    has_type = 'type' in df.columns
    names = list(type_names)
    rows: List[Tuple[int, int, int]] = []
    for index, record in enumerate(df.itertuples(index=False)):
        line = index + 2
        slot = _parse_count(str(record.slot), line, 'slot')
        count = _parse_count(str(record.arrivals), line, 'arrivals')
        type_index = -1
        if has_type:
            label = str(record.type).strip()
            if label in names:
                type_index = names.index(label)
            elif label.isdigit() and int(label) < len(names):
                type_index = int(label)
            else:
                raise SchemaError(f"unknown user type {label!r}", line=line, column='type')
        rows.append((slot, count, type_index))

    length = max((r[0] for r in rows), default=-1) + 1
    counts = np.zeros(length, dtype=np.int64)
    type_counts = np.zeros((length, len(names)), dtype=np.int64) if has_type else None
    for slot, count, type_index in rows:
        counts[slot] += count
        if type_counts is not None:
            type_counts[slot, type_index] += count
    return ArrivalSeries(counts=counts, type_counts=type_counts, source=str(path))


def write_arrivals_csv(series: ArrivalSeries, path: str, type_names: Sequence[str] = DEFAULT_TYPE_NAMES):
    if series.type_counts is None:
        df = pd.DataFrame({'slot': np.arange(len(series)), 'arrivals': series.counts})
    else:
        slots, types = np.nonzero(series.type_counts)
        df = pd.DataFrame({
            'slot': slots,
            'arrivals': series.type_counts[slots, types],
            'type': [type_names[t] for t in types],
        })
        # keep the final slot visible so the series length survives a round trip
        if len(series) and (slots.size == 0 or slots.max() < len(series) - 1):
            tail = pd.DataFrame({'slot': [len(series) - 1], 'arrivals': [0], 'type': [type_names[0]]})
            df = pd.concat([df, tail], ignore_index=True)
    df.to_csv(path, index=False)


def scale_prices(series: PriceSeries, factor: float) -> PriceSeries:
    """Multiply every price by `factor` (> 0)"""
    if factor <= 0:
        raise ValueError(f"price factor must be positive, got {factor}")
    source = f"{series.source} x{factor}" if series.source else f"x{factor}"
    return PriceSeries(series.prices * factor, source=source, slot_minutes=series.slot_minutes)


# ---------------------------------------------------------------- synthetic

@dataclass
class SyntheticConfig:
    """Parameters of the synthetic price curve and arrival process"""

    base_price: float = 0.8
    daily_amplitude: float = 0.3
    peak_price_hour: float = 15.0
    price_noise: float = 0.05
    mean_arrival_rate: float = 0.4
    peak_hours: Tuple[float, ...] = (8.0, 18.0)
    peak_width_hours: float = 1.5
    peak_gain: float = 2.0

    def __post_init__(self):
        self.peak_hours = tuple(float(h) for h in self.peak_hours)
        self.validate()

    def validate(self):
        if self.base_price < 0 or self.daily_amplitude < 0 or self.price_noise < 0:
            raise ValueError("base_price, daily_amplitude, price_noise: must be non-negative")
        if self.mean_arrival_rate < 0:
            raise ValueError("mean_arrival_rate: must be non-negative")
        if self.peak_width_hours <= 0:
            raise ValueError("peak_width_hours: must be positive")
        if self.peak_gain < 0:
            raise ValueError("peak_gain: must be non-negative")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['peak_hours'] = list(self.peak_hours)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "SyntheticConfig":
        return cls(**data)


def daily_price_curve(hours: np.ndarray, config: SyntheticConfig) -> np.ndarray:
    """Sinusoid with its maximum at `peak_price_hour`"""
    return config.base_price + config.daily_amplitude * np.cos(2.0 * np.pi * (hours - config.peak_price_hour) / 24.0)


def arrival_intensity(hours: np.ndarray, config: SyntheticConfig) -> np.ndarray:
    """Relative arrival intensity: flat floor plus Gaussian bumps at the peak hours"""
    shape = np.ones_like(hours, dtype=np.float64)
    for peak in config.peak_hours:
        distance = np.abs((hours - peak + 12.0) % 24.0 - 12.0)
        shape += config.peak_gain * np.exp(-0.5 * (distance / config.peak_width_hours) ** 2)
    return shape


def synthesize(scenario: ScenarioConfig, synthetic: Optional[SyntheticConfig] = None,
               seed: int = 0) -> "ScenarioBundle":
    """
    Seeded stand-in for real price and arrival data.

    Prices: one noisy value per hour from the daily curve, clipped at 0 and
    repeated to slot resolution. Arrivals: Poisson counts whose intensity has
    morning and evening peaks and averages exactly `mean_arrival_rate` per slot;
    per-type counts are split multinomially with the scenario's type weights.
    Returns: ScenarioBundle
    """
    synthetic = synthetic or SyntheticConfig()
    rng = np.random.default_rng(seed)
    horizon = scenario.horizon_slots
    per_hour = 60 // scenario.slot_minutes

    n_hours = -(-horizon // per_hour)
    hourly = daily_price_curve(np.arange(n_hours, dtype=np.float64), synthetic)
    if synthetic.price_noise > 0:
        hourly = hourly + rng.normal(scale=synthetic.price_noise, size=n_hours)
    prices = np.repeat(np.maximum(hourly, 0.0), per_hour)[:horizon]

    slot_hours = np.arange(horizon) * scenario.slot_minutes / 60.0
    intensity = arrival_intensity(slot_hours, synthetic)
    intensity *= synthetic.mean_arrival_rate / intensity.mean()
    counts = rng.poisson(intensity)
    weights = scenario.normalized_weights
    type_counts = np.stack([rng.multinomial(int(c), weights) for c in counts])

    return ScenarioBundle(
        config=scenario,
        prices=PriceSeries(prices, source='synthetic', slot_minutes=scenario.slot_minutes),
        arrivals=ArrivalSeries(counts, type_counts, source='synthetic'),
        seed=seed,
        synthetic=synthetic,
    )


# ---------------------------------------------------------------- bundles

@dataclass
class ScenarioBundle:
    """A station configuration together with the series it is simulated on"""

    config: ScenarioConfig
    prices: PriceSeries
    arrivals: ArrivalSeries
    seed: int = 0
    synthetic: Optional[SyntheticConfig] = None
    price_factor: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        horizon = self.config.horizon_slots
        if not self.price_factor > 0:
            raise ValueError(f"price_factor: must be positive, got {self.price_factor}")
        if len(self.prices) < horizon:
            raise ValueError(f"prices: {len(self.prices)} slots do not cover the horizon of {horizon}")
        if len(self.arrivals) < horizon:
            raise ValueError(f"arrivals: {len(self.arrivals)} slots do not cover the horizon of {horizon}")
        if self.arrivals.type_counts is not None and self.arrivals.type_counts.shape[1] != self.config.n_types:
            raise ValueError("arrivals: type_counts need one column per user type")

    def with_prices(self, prices: PriceSeries, price_factor: Optional[float] = None) -> "ScenarioBundle":
        factor = self.price_factor if price_factor is None else float(price_factor)
        return ScenarioBundle(self.config, prices, self.arrivals, self.seed, self.synthetic, factor)

    def to_dict(self) -> Dict:
        type_counts = self.arrivals.type_counts
        return {
            'config': self.config.to_dict(),
            'seed': self.seed,
            'price_factor': self.price_factor,
            'synthetic': self.synthetic.to_dict() if self.synthetic else None,
            'prices': {'source': self.prices.source, 'slot_minutes': self.prices.slot_minutes,
                       'values': self.prices.prices.tolist()},
            'arrivals': {'source': self.arrivals.source, 'counts': self.arrivals.counts.tolist(),
                         'type_counts': None if type_counts is None else type_counts.tolist()},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioBundle":
        prices = data['prices']
        arrivals = data['arrivals']
        return cls(
            config=ScenarioConfig.from_dict(data['config']),
            prices=PriceSeries(prices['values'], prices.get('source', ''), prices.get('slot_minutes', 5)),
            arrivals=ArrivalSeries(arrivals['counts'], arrivals.get('type_counts'), arrivals.get('source', '')),
            seed=int(data.get('seed', 0)),
            synthetic=SyntheticConfig.from_dict(data['synthetic']) if data.get('synthetic') else None,
            price_factor=float(data.get('price_factor', 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioBundle":
        return cls.from_dict(json.loads(text))

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON form"""
        return hashlib.sha256(self.to_json().encode('utf-8')).hexdigest()

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "ScenarioBundle":
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_json(f.read())


@dataclass
class DataConfig:
    """Where the series of an experiment come from"""

    source: str = 'synthetic'
    price_csv: Optional[str] = None
    arrivals_csv: Optional[str] = None
    seed: int = 0
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticConfig.from_dict(self.synthetic)
        self.validate()

    def validate(self):
        if self.source not in ('synthetic', 'csv'):
            raise ValueError(f"source: expected 'synthetic' or 'csv', got {self.source!r}")
        if self.source == 'csv' and not (self.price_csv and self.arrivals_csv):
            raise ValueError("price_csv: csv data needs both price_csv and arrivals_csv")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['synthetic'] = self.synthetic.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "DataConfig":
        return cls(**data)


def build_bundle(scenario: ScenarioConfig, data: DataConfig, price_factor: float = 1.0) -> ScenarioBundle:
    """Synthesize or load the scenario series, then apply the price factor"""
    if data.source == 'synthetic':
        bundle = synthesize(scenario, data.synthetic, data.seed)
    else:
        type_names = [t.name for t in scenario.user_types]
        bundle = ScenarioBundle(
            config=scenario,
            prices=load_price_csv(data.price_csv, scenario.slot_minutes),
            arrivals=load_arrivals_csv(data.arrivals_csv, type_names),
            seed=data.seed,
        )
    if price_factor != 1.0:
        bundle = bundle.with_prices(scale_prices(bundle.prices, price_factor), price_factor)
    return bundle
