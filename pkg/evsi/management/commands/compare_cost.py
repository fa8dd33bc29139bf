from evsi.mlmc import nested_mc_cost, run_mlmc
from evsi.serializers import CostComparisonSerializer

from ._base import STREAM_MLMC, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "Compara eps^2 por el costo de MLMC y de Monte Carlo anidado en el nivel L elegido por MLMC."

    default_eps = '2,5,10,20'

    def run(self, config):
        model = self.build_model(config)
        rows, converged, evaluations = [], True, 0
        for index, eps in enumerate(config['eps']):
            mlmc_config = self.mlmc_config(config, eps)
            result = run_mlmc(model, mlmc_config, self.random_source(config, STREAM_MLMC, index))
            converged = converged and result.converged
            evaluations += result.total_cost
            nmc_cost = nested_mc_cost(result.levels, result.final_level, eps, mlmc_config.m0,
                                      mlmc_config.variance_fraction)
            rows.append({
                'eps': eps,
                'final_level': result.final_level,
                'mlmc_cost': result.total_cost,
                'nmc_cost': nmc_cost,
                'eps2_mlmc_cost': eps ** 2 * result.total_cost,
                'eps2_nmc_cost': eps ** 2 * nmc_cost,
                'cost_ratio': nmc_cost / result.total_cost,
            })
            self.stdout.write(
                f"eps={eps:g}: eps²·C_MLMC = {rows[-1]['eps2_mlmc_cost']:,.0f}, "
                f"eps²·C_NMC = {rows[-1]['eps2_nmc_cost']:,.0f} (ahorro x{rows[-1]['cost_ratio']:.1f})"
            )

        self.write(CostComparisonSerializer, rows, self.output_prefix(config), 'cost', config)
        return {'converged': converged, 'model_evaluations': evaluations}
