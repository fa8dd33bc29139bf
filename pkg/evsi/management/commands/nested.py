from evsi.mlmc import run_nested_mc
from evsi.serializers import NestedRunSerializer

from ._base import STREAM_NESTED, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "Una corrida de Monte Carlo anidado: promedio de P_L en el nivel --levels con --samples muestras."

    default_samples = 1000
    default_levels = 4

    def run(self, config):
        model = self.build_model(config)
        result = run_nested_mc(
            model, self.mlmc_config(config, config['eps'][0]), config['levels'], config['samples'],
            self.random_source(config, STREAM_NESTED),
        )
        self.write(NestedRunSerializer, [result], self.output_prefix(config), 'nested', config)
        self.stdout.write(self.style.SUCCESS(
            f"✅ MC anidado L={result.level}: {result.estimate:,.2f} ± {result.std_error:.2f}"
        ))
        return {'converged': True, 'model_evaluations': result.total_cost}
