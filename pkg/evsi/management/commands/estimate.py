from evsi.case_study import enbs, population_evsi
from evsi.decision import estimate_evpi
from evsi.mlmc import run_mlmc
from evsi.serializers import EstimateSummarySerializer, SampleScheduleSerializer

from ._base import STREAM_EVPI, STREAM_MLMC, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "Estima EVPI - EVSI por MLMC para cada eps y resume EVSI por persona, EVSI poblacional y ENBS."

    def run(self, config):
        model = self.build_model(config)
        scenario = getattr(model, 'scenario', None)

        self.stdout.write(f"⏳ EVPI con {config['evpi_samples']} muestras")
        evpi = estimate_evpi(model, config['evpi_samples'], self.random_source(config, STREAM_EVPI))
        evaluations = evpi.n_samples

        schedule, summary, converged = [], [], True
        for index, eps in enumerate(config['eps']):
            result = run_mlmc(model, self.mlmc_config(config, eps), self.random_source(config, STREAM_MLMC, index))
            converged = converged and result.converged
            evaluations += result.total_cost
            schedule.extend(result.schedule().to_dict('records'))

            per_person = evpi.estimate - result.estimate
            population = population_evsi(per_person, model.population) if scenario else None
            summary.append({
                'scenario': config['scenario'],
                'eps': eps,
                'estimate': result.estimate,
                'std_error': result.std_error,
                'final_level': result.final_level,
                'converged': result.converged,
                'total_cost': result.total_cost,
                'alpha_hat': result.alpha_hat,
                'beta_hat': result.beta_hat,
                'evpi': evpi.estimate,
                'evpi_std_error': evpi.std_error,
                'per_person_evsi': per_person,
                'population_evsi': population,
                'study_cost': scenario.study_cost if scenario else None,
                'enbs': enbs(population, scenario.study_cost) if scenario else None,
                'resamples': result.resamples,
                'bound_violations': result.bound_violations,
            })

            line = (f"eps={eps:g}: EVPI-EVSI = {result.estimate:,.2f} (L={result.final_level}), "
                    f"EVSI por persona = {per_person:,.2f}")
            if scenario:
                line += f", ENBS = ${summary[-1]['enbs']:,.0f}"
            if result.converged:
                self.stdout.write(self.style.SUCCESS(f"✅ {line}"))
            else:
                self.stdout.write(self.style.WARNING(f"⚠️ {line} [NO CONVERGIÓ]"))

        prefix = self.output_prefix(config)
        self.write(SampleScheduleSerializer, schedule, prefix, 'schedule', config)
        self.write(EstimateSummarySerializer, summary, prefix, 'summary', config)
        return {'converged': converged, 'model_evaluations': evaluations}
