from rest_framework import serializers

SCENARIO_CHOICES = ['1', '2', '3', 'toy']
FORMAT_CHOICES = ['csv', 'json']


class FloatListField(serializers.ListField):
    """Lista de reales; acepta también '2,5,10' tal como viene de un archivo .env."""

    child = serializers.FloatField()

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item for item in data.replace(';', ',').split(',') if item.strip()]
        return super().to_internal_value(data)


class RunConfigSerializer(serializers.Serializer):
    # Configuración ya combinada: settings < archivo --config < flags
    command = serializers.CharField(max_length=40)
    scenario = serializers.ChoiceField(choices=SCENARIO_CHOICES)
    eps = FloatListField(min_length=1)
    m0 = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    samples = serializers.IntegerField(min_value=2, required=False, allow_null=True)
    levels = serializers.IntegerField(min_value=0, max_value=30, required=False, allow_null=True)
    no_is = serializers.BooleanField()
    format = serializers.ChoiceField(choices=FORMAT_CHOICES)
    out = serializers.CharField()
    threads = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    evpi_samples = serializers.IntegerField(min_value=2)

    def validate_eps(self, value):
        if any(not eps > 0 for eps in value):
            raise serializers.ValidationError("Todos los valores de eps deben ser positivos.")
        return value


class ConvergenceRowSerializer(serializers.Serializer):
    level = serializers.IntegerField()
    n_samples = serializers.IntegerField()
    mean_p = serializers.FloatField()
    var_p = serializers.FloatField()
    mean_dp = serializers.FloatField()
    var_dp = serializers.FloatField()
    kurtosis = serializers.FloatField()
    cost = serializers.IntegerField()


class RatesSerializer(serializers.Serializer):
    l_min = serializers.IntegerField()
    alpha_hat = serializers.FloatField(allow_null=True)
    beta_hat = serializers.FloatField(allow_null=True)


class SampleScheduleSerializer(serializers.Serializer):
    eps = serializers.FloatField()
    level = serializers.IntegerField()
    n_samples = serializers.IntegerField()


class EstimateSummarySerializer(serializers.Serializer):
    scenario = serializers.CharField()
    eps = serializers.FloatField()
    estimate = serializers.FloatField()
    std_error = serializers.FloatField()
    final_level = serializers.IntegerField()
    converged = serializers.BooleanField()
    total_cost = serializers.IntegerField()
    alpha_hat = serializers.FloatField(allow_null=True)
    beta_hat = serializers.FloatField(allow_null=True)
    evpi = serializers.FloatField()
    evpi_std_error = serializers.FloatField()
    per_person_evsi = serializers.FloatField()
    population_evsi = serializers.FloatField(allow_null=True)
    study_cost = serializers.FloatField(allow_null=True)
    enbs = serializers.FloatField(allow_null=True)
    resamples = serializers.IntegerField()
    bound_violations = serializers.IntegerField()


class CostComparisonSerializer(serializers.Serializer):
    eps = serializers.FloatField()
    final_level = serializers.IntegerField()
    mlmc_cost = serializers.IntegerField()
    nmc_cost = serializers.IntegerField()
    eps2_mlmc_cost = serializers.FloatField()
    eps2_nmc_cost = serializers.FloatField()
    cost_ratio = serializers.FloatField()


class EvpiSerializer(serializers.Serializer):
    estimate = serializers.FloatField()
    std_error = serializers.FloatField()
    first_term_std_error = serializers.FloatField()
    repetition_std_error = serializers.FloatField(allow_null=True)
    optimal_decision = serializers.IntegerField()
    n_samples = serializers.IntegerField()
    repetitions = serializers.IntegerField()


class EnbsSerializer(serializers.Serializer):
    scenario = serializers.CharField()
    per_person_evsi = serializers.FloatField()
    population = serializers.FloatField()
    population_evsi = serializers.FloatField()
    study_cost = serializers.FloatField()
    enbs = serializers.FloatField()


class NestedRunSerializer(serializers.Serializer):
    level = serializers.IntegerField()
    n_samples = serializers.IntegerField()
    estimate = serializers.FloatField()
    std_error = serializers.FloatField()
    total_cost = serializers.IntegerField()


class RunMetadataSerializer(serializers.Serializer):
    # Único archivo con valores de reloj; los demás son deterministas
    command = serializers.CharField()
    config = serializers.DictField()
    started_at = serializers.CharField()
    wall_time_seconds = serializers.FloatField()
    model_evaluations = serializers.IntegerField()
    converged = serializers.BooleanField()
