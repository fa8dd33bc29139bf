from evsi.mlmc import convergence_report
from evsi.serializers import ConvergenceRowSerializer, RatesSerializer

from ._base import STREAM_MLMC, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "Pruebas de convergencia por nivel: media y varianza de P_l y Delta P_l, curtosis, costo y tasas alpha/beta."

    default_samples = 10_000
    default_levels = 6

    def run(self, config):
        model = self.build_model(config)
        mlmc_config = self.mlmc_config(config, config['eps'][0])
        self.stdout.write(
            f"⏳ Convergencia escenario {config['scenario']}: niveles 0..{config['levels']}, "
            f"{config['samples']} muestras por nivel"
        )
        report = convergence_report(
            model, config['levels'], config['samples'], mlmc_config,
            self.random_source(config, STREAM_MLMC),
        )

        prefix = self.output_prefix(config)
        self.write(ConvergenceRowSerializer, report.table.to_dict('records'), prefix, 'convergence', config)
        self.write(RatesSerializer, [{
            'l_min': mlmc_config.l_min,
            'alpha_hat': report.alpha_hat,
            'beta_hat': report.beta_hat,
        }], prefix, 'rates', config)

        if report.alpha_hat is not None:
            self.stdout.write(self.style.SUCCESS(
                f"✅ alpha = {report.alpha_hat:.2f}, beta = {report.beta_hat:.2f}"
            ))
        else:
            self.stdout.write(self.style.WARNING("⚠️ No hay niveles suficientes para estimar alpha y beta"))
        return {'converged': True, 'model_evaluations': sum(e.cost for e in report.levels)}
