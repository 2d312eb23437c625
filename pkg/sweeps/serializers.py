# sweeps/serializers.py
from rest_framework import serializers

from relaxation.models import RateConvention, SolverTag

from .models import AXIS_UNITS, Preset, Quantity


def _range_messages(text: str) -> dict:
    return {"min_value": text, "max_value": text}


class LandscapeSectionSerializer(serializers.Serializer):
    """
    landscape.*: ландшафт связи в единицах ключей (МГц/ГГц/нс).
    c0 линии потерь может быть отрицательным: проверяем γ_in ≥ 0 на краях полосы
    уже в модели.
    """
    gamma_peak_mhz = serializers.FloatField(min_value=0.0)
    omega_center_ghz = serializers.FloatField(min_value=0.0)
    n_pairs = serializers.IntegerField(min_value=1)
    beta = serializers.FloatField(min_value=0.0, max_value=1.0, error_messages=_range_messages("beta out of [0,1]"))
    delay_t_ns = serializers.FloatField()
    gamma_in_c0_mhz = serializers.FloatField()
    gamma_in_slope = serializers.FloatField()
    band_lo_ghz = serializers.FloatField(min_value=0.0)
    band_hi_ghz = serializers.FloatField(min_value=0.0)

    def validate_delay_t_ns(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("delay must be > 0")
        return value

    def validate(self, attrs):
        if attrs["band_lo_ghz"] >= attrs["band_hi_ghz"]:
            raise serializers.ValidationError({"band_hi_ghz": "band_hi_ghz must be > band_lo_ghz"})
        return attrs


class SolverSectionSerializer(serializers.Serializer):
    dt_ns = serializers.FloatField()
    n_modes = serializers.IntegerField(min_value=1)
    bandwidth_mhz = serializers.FloatField()
    convention = serializers.ChoiceField(choices=RateConvention.choices)
    secular = serializers.BooleanField()
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    threads = serializers.IntegerField(min_value=1)
    relax_solver = serializers.ChoiceField(choices=SolverTag.choices)
    t_max_ns = serializers.FloatField(min_value=0.0)
    extra_dephasing_mhz = serializers.FloatField(min_value=0.0)
    shots = serializers.IntegerField(min_value=0)
    time_samples = serializers.IntegerField(min_value=2)

    def validate_dt_ns(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("dt must be > 0")
        return value

    def validate_bandwidth_mhz(self, value: float) -> float:
        if value <= 0:
            raise serializers.ValidationError("bandwidth must be > 0")
        return value


class DriveSectionSerializer(serializers.Serializer):
    qubit_ghz = serializers.FloatField(min_value=0.0)
    omega_mhz = serializers.FloatField(min_value=0.0)
    delta_mhz = serializers.FloatField()
    duration_us = serializers.FloatField(min_value=0.0)


class AxisSerializer(serializers.Serializer):
    name = serializers.ChoiceField(choices=[""] + sorted(AXIS_UNITS), allow_blank=True)
    start = serializers.FloatField()
    stop = serializers.FloatField()
    count = serializers.IntegerField(min_value=1)

    def validate(self, attrs):
        if attrs["name"] and attrs["start"] > attrs["stop"]:
            raise serializers.ValidationError({"stop": "stop must be >= start"})
        return attrs


class SweepSectionSerializer(serializers.Serializer):
    preset = serializers.ChoiceField(choices=[""] + list(Preset.values), allow_blank=True)
    quantities = serializers.ListField(child=serializers.ChoiceField(choices=Quantity.choices), allow_empty=False)
    x = AxisSerializer()
    y = AxisSerializer()

    def validate(self, attrs):
        x, y = attrs["x"], attrs["y"]
        if y["name"] and not x["name"]:
            raise serializers.ValidationError({"y": {"name": "y axis needs an x axis"}})
        if y["name"] and y["name"] == x["name"]:
            raise serializers.ValidationError({"y": {"name": "x and y axes must differ"}})
        return attrs


SECTION_SERIALIZERS = {
    "landscape": LandscapeSectionSerializer,
    "solver": SolverSectionSerializer,
    "drive": DriveSectionSerializer,
    "sweep": SweepSectionSerializer,
}
